import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import { spawnSync } from 'child_process'
import { describe, it, expect } from 'vitest'
import {
  ExportRecord,
  InterchangeNode,
  exitCodeFor,
  exportDirectory,
  exportSource,
  serializeTree,
  sha256Hex,
  writeRecords
} from '../src/export'
import { main, parseArgs } from '../src/cli'

const ROOT = path.resolve(__dirname, '..')
const SCRIPTS_DIR = path.join(ROOT, 'fixtures', 'scripts')
const GOLDEN_DIR = path.join(ROOT, 'fixtures', 'golden')
const CLI_JS = path.join(ROOT, 'dist', 'cli.js')

// Pairs that differ only in identifier names, comments, and spacing; their
// exports must be byte-identical.
const MUTATION_PAIRS: Array<[string, string]> = [
  ['assign_plain', 'assign_mutated'],
  ['beacon_send', 'beacon_renamed']
]

function tempDir (label: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), 'ast-exporter-' + label + '-'))
}

function fixtureNames (): string[] {
  return fs.readdirSync(SCRIPTS_DIR).filter(function (name) {
    return name.endsWith('.js')
  }).sort()
}

function outputFor (outDir: string, scriptPath: string): Buffer {
  const hash = sha256Hex(fs.readFileSync(scriptPath))
  return fs.readFileSync(path.join(outDir, hash + '.ast.json'))
}

describe('golden conformance', function () {
  const outDir = tempDir('golden')
  const records = exportDirectory(SCRIPTS_DIR, outDir)

  it('exports all twenty fixtures cleanly', function () {
    expect(fixtureNames().length).toBe(20)
    expect(records.length).toBe(20)
    expect(records.every(function (r) { return r.status === 'ok' })).toBe(true)
    expect(exitCodeFor(records)).toBe(0)
  })

  it('matches every committed golden byte for byte', function () {
    for (const name of fixtureNames()) {
      const got = outputFor(outDir, path.join(SCRIPTS_DIR, name))
      const golden = fs.readFileSync(
        path.join(GOLDEN_DIR, path.basename(name, '.js') + '.ast.json')
      )
      expect(got.equals(golden), name).toBe(true)
    }
  })

  it('exports mutation pairs byte-identically', function () {
    for (const [left, right] of MUTATION_PAIRS) {
      const a = outputFor(outDir, path.join(SCRIPTS_DIR, left + '.js'))
      const b = outputFor(outDir, path.join(SCRIPTS_DIR, right + '.js'))
      expect(a.equals(b), left + ' vs ' + right).toBe(true)
    }
  })

  it('emits only t and c keys at every depth', function () {
    for (const record of records) {
      const parsed = JSON.parse(fs.readFileSync(record.output as string, 'utf8'))
      const stack = [parsed]
      while (stack.length > 0) {
        const node = stack.pop()
        expect(Object.keys(node).sort()).toEqual(['c', 't'])
        expect(typeof node.t).toBe('string')
        expect(Array.isArray(node.c)).toBe(true)
        for (const child of node.c) stack.push(child)
      }
    }
  })

  it('lists records sorted by input path', function () {
    const inputs = records.map(function (r) { return r.input })
    expect(inputs).toEqual(inputs.slice().sort())
  })

  it('is byte-identical across repeated exports', function () {
    const again = tempDir('repeat')
    exportDirectory(SCRIPTS_DIR, again)
    for (const name of fixtureNames()) {
      const first = outputFor(outDir, path.join(SCRIPTS_DIR, name))
      const second = outputFor(again, path.join(SCRIPTS_DIR, name))
      expect(first.equals(second), name).toBe(true)
    }
  })
})

describe('single-source export', function () {
  it('exports the empty program', function () {
    expect(exportSource('')).toBe('{"t":"Program","c":[]}\n')
  })

  it('drops identifiers, literals, and comments', function () {
    expect(exportSource('var a=1;')).toBe(exportSource('var b = 1; // hi\n'))
  })

  it('keeps structural differences apart', function () {
    expect(exportSource('var a = 1;')).not.toBe(exportSource('var a = b;'))
    expect(exportSource('f(x)')).not.toBe(exportSource('f(x, y)'))
  })

  it('rejects module syntax in script mode and accepts it with --module', function () {
    expect(function () { exportSource('export const x = 1;') }).toThrow()
    expect(exportSource('export const x = 1;', { sourceType: 'module' }))
      .toContain('"t":"ExportNamedDeclaration"')
  })

  it('serializes deep chains without exhausting the call stack', function () {
    let node: InterchangeNode = { t: 'Leaf', c: [] }
    for (let i = 0; i < 100000; i++) {
      node = { t: 'Wrap', c: [node] }
    }
    const text = serializeTree(node)
    expect(text.startsWith('{"t":"Wrap","c":[{"t":"Wrap"')).toBe(true)
    expect(text.endsWith('{"t":"Leaf","c":[]}' + ']}'.repeat(100000))).toBe(true)
  })
})

describe('failure handling', function () {
  it('records a parse error and writes no output for invalid syntax', function () {
    const inDir = tempDir('bad-in')
    const outDir = tempDir('bad-out')
    fs.writeFileSync(path.join(inDir, 'broken.js'), 'var = ;')
    fs.writeFileSync(path.join(inDir, 'fine.js'), 'var ok = true;')
    const records = exportDirectory(inDir, outDir)
    expect(records.length).toBe(2)
    const broken = records.find(function (r) { return r.input.endsWith('broken.js') }) as ExportRecord
    expect(broken.status).toBe('parse-error')
    expect(broken.error).toBeTruthy()
    expect(broken.output).toBeNull()
    expect(broken.sourceHash).toBe(sha256Hex('var = ;'))
    const fine = records.find(function (r) { return r.input.endsWith('fine.js') }) as ExportRecord
    expect(fine.status).toBe('ok')
    expect(fs.existsSync(fine.output as string)).toBe(true)
    expect(fs.readdirSync(outDir).filter(function (n) { return n.endsWith('.ast.json') }).length).toBe(1)
    expect(exitCodeFor(records)).toBe(2)
  })

  it('records unreadable inputs without aborting the batch', function () {
    const inDir = tempDir('unread-in')
    const outDir = tempDir('unread-out')
    fs.mkdirSync(path.join(inDir, 'directory.js'))
    fs.symlinkSync(path.join(inDir, 'nowhere'), path.join(inDir, 'dangling.js'))
    fs.writeFileSync(path.join(inDir, 'fine.js'), 'var ok = 1;')
    const records = exportDirectory(inDir, outDir)
    expect(records.length).toBe(3)
    for (const name of ['directory.js', 'dangling.js']) {
      const bad = records.find(function (r) { return r.input.endsWith(name) }) as ExportRecord
      expect(bad.status, name).toBe('parse-error')
      expect(bad.error).toBeTruthy()
      expect(bad.sourceHash).toBeNull()
      expect(bad.output).toBeNull()
    }
    expect(records.find(function (r) { return r.input.endsWith('fine.js') })?.status).toBe('ok')
    expect(exitCodeFor(records)).toBe(2)
  })
})

describe('command line', function () {
  it('parses flags and rejects unknown or missing ones', function () {
    const args = parseArgs(['--in', 'a', '--out', 'b', '--module'])
    expect(args.inputDir).toBe('a')
    expect(args.outputDir).toBe('b')
    expect(args.options.sourceType).toBe('module')
    expect(parseArgs(['--in', 'a', '--out', 'b']).options.sourceType).toBe('script')
    expect(function () { parseArgs(['--in', 'a']) }).toThrow()
    expect(function () { parseArgs(['--frobnicate']) }).toThrow()
    expect(main(['--nonsense'])).toBe(1)
  })

  it('writes a records file alongside the outputs', function () {
    const inDir = tempDir('rec-in')
    const outDir = tempDir('rec-out')
    fs.writeFileSync(path.join(inDir, 'one.js'), 'f();')
    const records = exportDirectory(inDir, outDir)
    const recordsPath = writeRecords(records, outDir)
    const rows = fs.readFileSync(recordsPath, 'utf8').trim().split('\n').map(function (line) {
      return JSON.parse(line)
    })
    expect(rows.length).toBe(1)
    expect(rows[0].input).toBe(path.join(inDir, 'one.js'))
    expect(rows[0].source_hash).toBe(sha256Hex('f();'))
    expect(rows[0].output).toBe(records[0].output)
    expect(rows[0].status).toBe('ok')
  })

  it('exits 0 on success and 2 when any file fails to parse', function () {
    const outDir = tempDir('cli-out')
    const clean = spawnSync('node', [CLI_JS, '--in', SCRIPTS_DIR, '--out', outDir])
    expect(clean.status).toBe(0)
    expect(fs.existsSync(path.join(outDir, 'records.jsonl'))).toBe(true)

    const inDir = tempDir('cli-bad')
    fs.writeFileSync(path.join(inDir, 'broken.js'), ')(')
    const dirty = spawnSync('node', [CLI_JS, '--in', inDir, '--out', tempDir('cli-bad-out')])
    expect(dirty.status).toBe(2)
  })
})
