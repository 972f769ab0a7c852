/**
 * Extraction CLI: `node dist/cli.js --spec spec.json`
 *
 * Spec file:
 *   {
 *     "model": "fixtures/model",
 *     "id_dataset": "fixtures/patterns_id.omsb",
 *     "train_split": "train",
 *     "test_split": "test",
 *     "ood_source": {"novelty": {"dataset": "fixtures/checkers_novel.omsb"}},
 *     "caps": {"train": 100, "test": 60, "ood": 60},
 *     "name": "patterns-vs-checkers",
 *     "out": "out/scenario.omsb"
 *   }
 *
 * ood_source alternatives:
 *   {"transform": {"kind": "brightness" | "blur" | "pixelization", "magnitude": 3}}
 *   "none"   (duplicates the capped test split, ood_kind "other")
 *
 * Exit codes: 0 ok, 2 bad spec, 3 unsupported model architecture or bad data.
 */

import { readFileSync } from 'node:fs'

import { extract, parseSpec, SpecError } from './extract.js'
import { UnsupportedArchitectureError } from './model.js'

async function main(): Promise<number> {
  const args = process.argv.slice(2)
  const flag = args.indexOf('--spec')
  if (flag === -1 || !args[flag + 1]) {
    console.error('usage: cli.js --spec <spec.json>')
    return 2
  }
  let raw: unknown
  try {
    raw = JSON.parse(readFileSync(args[flag + 1], 'utf-8'))
  } catch (err) {
    console.error(`cannot read spec: ${err}`)
    return 2
  }
  try {
    const summary = await extract(parseSpec(raw))
    console.log(JSON.stringify(summary, null, 2))
    return 0
  } catch (err) {
    if (err instanceof SpecError) {
      console.error(`spec error: ${err.message}`)
      return 2
    }
    if (err instanceof UnsupportedArchitectureError) {
      console.error(`unsupported architecture: ${err.message}`)
      return 3
    }
    throw err
  }
}

main().then((code) => {
  process.exitCode = code
})
