import * as fs from 'fs'
import * as path from 'path'
import * as crypto from 'crypto'
import * as acorn from 'acorn'

/**
 * Type-only syntax tree node: one node type name plus ordered children.
 * This is the whole interchange schema; anything else a parser attaches
 * (identifiers, literal values, positions, comments) is dropped at export
 * time so consumers never need an ECMAScript grammar of their own.
 */
export interface InterchangeNode {
  t: string
  c: InterchangeNode[]
}

export type ParseStatus = 'ok' | 'parse-error'

export interface ExportRecord {
  input: string
  sourceHash: string | null
  output: string | null
  status: ParseStatus
  error?: string
}

export interface ExportOptions {
  sourceType?: 'script' | 'module'
}

export function sha256Hex (data: Buffer | string): string {
  return crypto.createHash('sha256').update(data).digest('hex')
}

function isEstreeNode (value: any): boolean {
  return value !== null && typeof value === 'object' &&
    !Array.isArray(value) && typeof value.type === 'string'
}

// Parser bookkeeping that must never surface as a child.
const SKIPPED_KEYS = new Set(['type', 'start', 'end', 'loc', 'range'])

/**
 * Strip a parsed ESTree program down to node type names and child order.
 *
 * Children are discovered by walking each node's own properties in parser
 * insertion order: a node-valued property is one child, an array property
 * contributes each node element in sequence. Everything else (names, literal
 * values, flags, the metadata keys above) is payload, not structure, and is
 * dropped. Array holes parse to null elements and vanish with the rest.
 */
export function toInterchange (program: any): InterchangeNode {
  const root: InterchangeNode = { t: program.type, c: [] }
  const stack: Array<[any, InterchangeNode]> = [[program, root]]
  while (stack.length > 0) {
    const [node, obj] = stack.pop() as [any, InterchangeNode]
    for (const key of Object.keys(node)) {
      if (SKIPPED_KEYS.has(key)) continue
      const value = node[key]
      if (isEstreeNode(value)) {
        const child: InterchangeNode = { t: value.type, c: [] }
        obj.c.push(child)
        stack.push([value, child])
      } else if (Array.isArray(value)) {
        for (const element of value) {
          if (!isEstreeNode(element)) continue
          const child: InterchangeNode = { t: element.type, c: [] }
          obj.c.push(child)
          stack.push([element, child])
        }
      }
    }
  }
  return root
}

/**
 * Compact, key-order-stable JSON for one tree. Serialized by explicit
 * stack rather than JSON.stringify so depth is bounded by heap, not the
 * call stack, and so the byte layout is pinned down in one place:
 * {"t":<type>,"c":[...]} with no whitespace and a trailing newline added
 * by the caller when writing files.
 */
export function serializeTree (root: InterchangeNode): string {
  const out: string[] = []
  const stack: Array<InterchangeNode | string> = [root]
  while (stack.length > 0) {
    const item = stack.pop() as InterchangeNode | string
    if (typeof item === 'string') {
      out.push(item)
      continue
    }
    out.push('{"t":' + JSON.stringify(item.t) + ',"c":[')
    stack.push(']}')
    for (let i = item.c.length - 1; i >= 0; i--) {
      stack.push(item.c[i])
      if (i > 0) stack.push(',')
    }
  }
  return out.join('')
}

export function parseSource (source: string, options: ExportOptions = {}): InterchangeNode {
  const program = acorn.parse(source, {
    ecmaVersion: 'latest',
    sourceType: options.sourceType ?? 'script'
  })
  return toInterchange(program)
}

export function exportSource (source: string, options: ExportOptions = {}): string {
  return serializeTree(parseSource(source, options)) + '\n'
}

// Every .js entry is a candidate; unreadable ones (directories, dangling
// symlinks) fail at read time and become error records, not crashes.
function listScripts (inputDir: string): string[] {
  const names = fs.readdirSync(inputDir).filter(function (name) {
    return name.endsWith('.js')
  })
  names.sort()
  return names
}

/**
 * Export every .js file in inputDir to {source_hash}.ast.json in outputDir,
 * where source_hash is the SHA-256 of the raw file bytes. One record per
 * input; parse and read failures are recorded, never fatal to the batch.
 */
export function exportDirectory (
  inputDir: string,
  outputDir: string,
  options: ExportOptions = {}
): ExportRecord[] {
  fs.mkdirSync(outputDir, { recursive: true })
  const records: ExportRecord[] = []
  for (const name of listScripts(inputDir)) {
    const inputPath = path.join(inputDir, name)
    let bytes: Buffer
    try {
      bytes = fs.readFileSync(inputPath)
    } catch (err: any) {
      records.push({
        input: inputPath,
        sourceHash: null,
        output: null,
        status: 'parse-error',
        error: String(err?.message ?? err)
      })
      continue
    }
    const sourceHash = sha256Hex(bytes)
    let serialized: string
    try {
      serialized = exportSource(bytes.toString('utf8'), options)
    } catch (err: any) {
      records.push({
        input: inputPath,
        sourceHash,
        output: null,
        status: 'parse-error',
        error: String(err?.message ?? err)
      })
      continue
    }
    const outputPath = path.join(outputDir, sourceHash + '.ast.json')
    fs.writeFileSync(outputPath, serialized)
    records.push({ input: inputPath, sourceHash, output: outputPath, status: 'ok' })
  }
  return records
}

export function writeRecords (records: ExportRecord[], outputDir: string): string {
  const recordsPath = path.join(outputDir, 'records.jsonl')
  const lines = records.map(function (record) {
    const row: any = {
      input: record.input,
      source_hash: record.sourceHash,
      output: record.output,
      status: record.status
    }
    if (record.error !== undefined) row.error = record.error
    return JSON.stringify(row)
  })
  fs.writeFileSync(recordsPath, lines.join('\n') + (lines.length > 0 ? '\n' : ''))
  return recordsPath
}

export function exitCodeFor (records: ExportRecord[]): number {
  return records.some(function (record) { return record.status !== 'ok' }) ? 2 : 0
}
