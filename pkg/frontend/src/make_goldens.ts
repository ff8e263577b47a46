import * as fs from 'fs'
import * as os from 'os'
import * as path from 'path'
import { exportDirectory } from './export'

// Regenerate the committed golden outputs, one per fixture script, named by
// fixture basename so diffs stay reviewable. Run only when the exporter's
// byte format deliberately changes; tests compare against these files.
function main (): number {
  const root = path.resolve(__dirname, '..')
  const scriptsDir = path.join(root, 'fixtures', 'scripts')
  const goldenDir = path.join(root, 'fixtures', 'golden')
  const outDir = fs.mkdtempSync(path.join(os.tmpdir(), 'ast-goldens-'))
  const records = exportDirectory(scriptsDir, outDir)
  const failed = records.filter(function (record) { return record.status !== 'ok' })
  if (failed.length > 0) {
    for (const record of failed) {
      console.error(record.input + ': ' + (record.error ?? 'parse error'))
    }
    return 1
  }
  fs.rmSync(goldenDir, { recursive: true, force: true })
  fs.mkdirSync(goldenDir, { recursive: true })
  for (const record of records) {
    const base = path.basename(record.input, '.js')
    fs.copyFileSync(record.output as string, path.join(goldenDir, base + '.ast.json'))
  }
  console.error('wrote ' + records.length + ' goldens to ' + goldenDir)
  return 0
}

if (require.main === module) {
  process.exit(main())
}
