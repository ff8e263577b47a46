#!/usr/bin/env node
import { exportDirectory, writeRecords, exitCodeFor, ExportOptions } from './export'

const USAGE = 'usage: ast-exporter --in <dir> --out <dir> [--module]'

interface CliArgs {
  inputDir: string
  outputDir: string
  options: ExportOptions
}

export function parseArgs (argv: string[]): CliArgs {
  let inputDir: string | null = null
  let outputDir: string | null = null
  let sourceType: 'script' | 'module' = 'script'
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]
    if (arg === '--in') {
      inputDir = argv[++i]
    } else if (arg === '--out') {
      outputDir = argv[++i]
    } else if (arg === '--module') {
      sourceType = 'module'
    } else {
      throw new Error('unknown argument: ' + arg)
    }
  }
  if (!inputDir || !outputDir) {
    throw new Error('both --in and --out are required')
  }
  return { inputDir, outputDir, options: { sourceType } }
}

export function main (argv: string[]): number {
  let args: CliArgs
  try {
    args = parseArgs(argv)
  } catch (err: any) {
    console.error(String(err?.message ?? err))
    console.error(USAGE)
    return 1
  }
  const records = exportDirectory(args.inputDir, args.outputDir, args.options)
  writeRecords(records, args.outputDir)
  const failed = records.filter(function (record) { return record.status !== 'ok' })
  for (const record of failed) {
    console.error(record.input + ': ' + (record.error ?? 'parse error'))
  }
  console.error(
    'exported ' + (records.length - failed.length) + '/' + records.length +
    ' scripts to ' + args.outputDir
  )
  return exitCodeFor(records)
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)))
}
