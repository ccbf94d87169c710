#!/usr/bin/env node
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { DEFAULT_CONFIG, extractAll } from './extract.js'
import { MODEL_SPECS } from './model.js'
import { verifyFile } from './verify.js'

async function main(): Promise<number> {
  let failed = false
  await yargs(hideBin(process.argv))
    .scriptName('ndvf-extract')
    .command(
      'extract <inputs...>',
      'run frames through a CNN and write NDVF feature containers',
      y =>
        y
          .positional('inputs', { array: true, type: 'string', demandOption: true })
          .option('model', {
            type: 'string',
            default: 'tiny',
            choices: Object.keys(MODEL_SPECS),
            describe: 'architecture; non-tiny models need --model-path',
          })
          .option('model-path', { type: 'string', describe: 'local tfjs LayersModel json' })
          .option('fps', {
            type: 'number',
            default: DEFAULT_CONFIG.sampleFps,
            describe: 'frames per second written to the container',
          })
          .option('source-fps', {
            type: 'number',
            default: DEFAULT_CONFIG.sourceFps,
            describe: 'frame rate assumed for image directories',
          })
          .option('out', { type: 'string', demandOption: true, describe: 'output directory' })
          .option('batch', { type: 'number', default: DEFAULT_CONFIG.batchSize }),
      async argv => {
        const written = await extractAll(argv.inputs as string[], {
          model: argv.model,
          modelPath: argv['model-path'],
          sampleFps: argv.fps,
          sourceFps: argv['source-fps'],
          outDir: argv.out,
          batchSize: argv.batch,
        })
        for (const path of written) console.log(path)
      },
    )
    .command(
      'verify <files...>',
      'validate NDVF containers and print a header summary',
      y => y.positional('files', { array: true, type: 'string', demandOption: true }),
      argv => {
        for (const path of argv.files as string[]) {
          const report = verifyFile(path)
          console.log(JSON.stringify(report))
          if (!report.ok) failed = true
        }
      },
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(`error: ${msg ?? err?.message}`)
      process.exitCode = 1
      failed = true
    })
    .parseAsync()
  return failed ? 1 : 0
}

main().then(
  code => {
    if (code !== 0) process.exitCode = code
  },
  err => {
    console.error(`error: ${err?.message ?? err}`)
    process.exitCode = 1
  },
)
