/**
 * Drive one input (frame directory or .rawv file) through a CNN and write the
 * per-frame two-level features as an NDVF container: the configured fc layer
 * output plus each conv layer's spatial channel maxima. Keyframe selection is
 * not done here; the retrieval engine selects on the fc vectors it reads.
 */

import { mkdirSync, writeFileSync } from 'node:fs'
import { basename, extname, join } from 'node:path'

import * as tf from '@tensorflow/tfjs'

import { openFrames, sampleIndices } from './decode.js'
import { ExtractorModel, loadExtractorModel } from './model.js'
import { channelMax } from './pooling.js'
import { encodeNdvf, FrameFeature, VideoFeatures } from './ndvf.js'

export interface ExtractorConfig {
  model: string
  modelPath?: string
  /** output keyframe candidate rate, frames per second written to the container */
  sampleFps: number
  /** frame rate assumed for image directories (raw containers carry their own) */
  sourceFps: number
  outDir: string
  videoId?: string
  batchSize: number
}

export const DEFAULT_CONFIG: Pick<ExtractorConfig, 'sampleFps' | 'sourceFps' | 'batchSize'> = {
  sampleFps: 8,
  sourceFps: 25,
  batchSize: 8,
}

function defaultVideoId(input: string): string {
  const base = basename(input)
  const ext = extname(base)
  return ext ? base.slice(0, -ext.length) : base
}

export async function extractVideo(
  input: string,
  config: ExtractorConfig,
  model?: ExtractorModel,
): Promise<string> {
  const owned = model === undefined
  const net = model ?? (await loadExtractorModel(config.model, config.modelPath))
  try {
    const source = openFrames(input, config.sourceFps)
    const indices = sampleIndices(source.frameCount, source.fps, config.sampleFps)
    const size = net.spec.inputSize

    const frames: FrameFeature[] = []
    for (let start = 0; start < indices.length; start += config.batchSize) {
      const chunk = indices.slice(start, start + config.batchSize)
      const batch = tf.tidy(() => {
        const images = chunk.map(src =>
          tf.tensor3d(source.frame(src), [source.height, source.width, 3]),
        )
        const stacked = tf.stack(images) as tf.Tensor4D
        return tf.image.resizeBilinear(stacked, [size, size])
      })
      const { convMaps, fc } = net.run(batch)
      const fcData = (await fc.data()) as Float32Array
      const fcDim = fc.shape[1]
      const mapData = await Promise.all(convMaps.map(async m => (await m.data()) as Float32Array))
      for (let b = 0; b < chunk.length; b++) {
        const outIndex = start + b
        const convVectors = convMaps.map((map, l) => {
          const [, h, w, c] = map.shape
          const per = h * w * c
          return channelMax(mapData[l].subarray(b * per, (b + 1) * per), h, w, c)
        })
        frames.push({
          frameIndex: outIndex,
          timestamp: outIndex / config.sampleFps,
          fcVector: fcData.slice(b * fcDim, (b + 1) * fcDim),
          convVectors,
        })
      }
      batch.dispose()
      convMaps.forEach(m => m.dispose())
      fc.dispose()
    }

    const video: VideoFeatures = {
      videoId: config.videoId ?? defaultVideoId(input),
      fps: config.sampleFps,
      frames,
      fcDim: net.spec.fcDim,
      layerDims: net.spec.convDims,
    }
    mkdirSync(config.outDir, { recursive: true })
    const outPath = join(config.outDir, `${video.videoId}.ndvf`)
    writeFileSync(outPath, encodeNdvf(video))
    return outPath
  } finally {
    if (owned) net.dispose()
  }
}

export async function extractAll(inputs: string[], config: ExtractorConfig): Promise<string[]> {
  const net = await loadExtractorModel(config.model, config.modelPath)
  try {
    const written: string[] = []
    for (const input of inputs) {
      written.push(await extractVideo(input, { ...config, videoId: undefined }, net))
    }
    return written
  } finally {
    net.dispose()
  }
}
