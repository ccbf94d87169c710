/**
 * Model registry for the extractor.
 *
 * "tiny" is a small conv net with seeded deterministic weights, built
 * in-process so the full extraction path runs without downloading anything.
 * "alexnet" and "googlenet" describe the layer names and channel counts of
 * the classic architectures; using them requires a locally converted tfjs
 * LayersModel passed via modelPath, and the declared channel counts are
 * checked against the loaded model's actual outputs.
 */

import { readFileSync } from 'node:fs'
import { dirname, join } from 'node:path'

import * as tf from '@tensorflow/tfjs'

export class ModelConfigError extends Error {}

/** Minimal file-system IOHandler: plain tfjs has no file:// loader in Node. */
function fileSystemHandler(modelJsonPath: string): tf.io.IOHandler {
  return {
    async load() {
      const manifest = JSON.parse(readFileSync(modelJsonPath, 'utf-8'))
      const dir = dirname(modelJsonPath)
      const specs: tf.io.WeightsManifestEntry[] = []
      const buffers: Buffer[] = []
      for (const group of manifest.weightsManifest ?? []) {
        specs.push(...group.weights)
        for (const path of group.paths) buffers.push(readFileSync(join(dir, path)))
      }
      const weights = Buffer.concat(buffers)
      return {
        modelTopology: manifest.modelTopology,
        format: manifest.format,
        generatedBy: manifest.generatedBy,
        convertedBy: manifest.convertedBy,
        weightSpecs: specs,
        weightData: weights.buffer.slice(
          weights.byteOffset,
          weights.byteOffset + weights.byteLength,
        ),
      }
    },
  }
}

export interface ModelSpec {
  name: string
  inputSize: number
  fcLayer: string
  convLayers: string[]
  fcDim: number
  convDims: number[]
}

export const MODEL_SPECS: Record<string, ModelSpec> = {
  tiny: {
    name: 'tiny',
    inputSize: 32,
    fcLayer: 'fc1',
    convLayers: ['conv1', 'conv2'],
    fcDim: 16,
    convDims: [8, 12],
  },
  alexnet: {
    name: 'alexnet',
    inputSize: 227,
    fcLayer: 'fc7',
    convLayers: ['conv1', 'conv2', 'conv3', 'conv4', 'conv5'],
    fcDim: 4096,
    convDims: [96, 256, 384, 384, 256], // sums to 1376
  },
  googlenet: {
    name: 'googlenet',
    inputSize: 224,
    fcLayer: 'pool5',
    convLayers: [
      'inception_3b', 'inception_4a', 'inception_4b', 'inception_4c',
      'inception_4d', 'inception_4e', 'inception_5a', 'inception_5b', 'pool5_pre',
    ],
    fcDim: 1024,
    convDims: [256, 480, 512, 512, 512, 528, 832, 832, 1024], // sums to 5488
  },
}

export interface ExtractorModel {
  spec: ModelSpec
  /** batch of images (n, size, size, 3) -> conv maps per layer plus fc matrix */
  run(batch: tf.Tensor4D): { convMaps: tf.Tensor4D[]; fc: tf.Tensor2D }
  dispose(): void
}

export function buildTinyModel(seed = 7): tf.LayersModel {
  const input = tf.input({ shape: [32, 32, 3] })
  const conv1 = tf.layers
    .conv2d({
      name: 'conv1',
      filters: 8,
      kernelSize: 3,
      activation: 'relu',
      padding: 'same',
      kernelInitializer: tf.initializers.glorotUniform({ seed }),
      biasInitializer: 'zeros',
    })
    .apply(input) as tf.SymbolicTensor
  const pool1 = tf.layers.maxPooling2d({ poolSize: 2 }).apply(conv1) as tf.SymbolicTensor
  const conv2 = tf.layers
    .conv2d({
      name: 'conv2',
      filters: 12,
      kernelSize: 3,
      activation: 'relu',
      padding: 'same',
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
      biasInitializer: 'zeros',
    })
    .apply(pool1) as tf.SymbolicTensor
  const pool2 = tf.layers.maxPooling2d({ poolSize: 2 }).apply(conv2) as tf.SymbolicTensor
  const flat = tf.layers.flatten().apply(pool2) as tf.SymbolicTensor
  const fc = tf.layers
    .dense({
      name: 'fc1',
      units: 16,
      activation: 'relu',
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 2 }),
      biasInitializer: 'zeros',
    })
    .apply(flat) as tf.SymbolicTensor
  return tf.model({ inputs: input, outputs: fc })
}

function wrap(model: tf.LayersModel, spec: ModelSpec): ExtractorModel {
  let outputs: tf.SymbolicTensor[]
  try {
    outputs = [...spec.convLayers, spec.fcLayer].map(
      name => model.getLayer(name).output as tf.SymbolicTensor,
    )
  } catch (err) {
    throw new ModelConfigError(`layer lookup failed for ${spec.name}: ${err}`)
  }
  const runner = tf.model({ inputs: model.inputs, outputs })

  const convChannels = outputs.slice(0, spec.convLayers.length).map(o => o.shape[3])
  convChannels.forEach((c, i) => {
    if (c !== spec.convDims[i]) {
      throw new ModelConfigError(
        `${spec.name}: layer ${spec.convLayers[i]} has ${c} channels, spec says ${spec.convDims[i]}`,
      )
    }
  })
  const fcShape = outputs[outputs.length - 1].shape
  if (fcShape[fcShape.length - 1] !== spec.fcDim) {
    throw new ModelConfigError(
      `${spec.name}: layer ${spec.fcLayer} yields ${fcShape[fcShape.length - 1]} values, spec says ${spec.fcDim}`,
    )
  }

  return {
    spec,
    run(batch) {
      const result = runner.predict(batch) as tf.Tensor[]
      const convMaps = result.slice(0, spec.convLayers.length) as tf.Tensor4D[]
      const fc = result[result.length - 1] as tf.Tensor2D
      return { convMaps, fc }
    },
    dispose() {
      runner.dispose()
    },
  }
}

export async function loadExtractorModel(
  name: string,
  modelPath?: string,
): Promise<ExtractorModel> {
  const spec = MODEL_SPECS[name]
  if (!spec) {
    throw new ModelConfigError(
      `unknown model ${JSON.stringify(name)}; known: ${Object.keys(MODEL_SPECS).join(', ')}`,
    )
  }
  if (name === 'tiny') {
    return wrap(buildTinyModel(), spec)
  }
  if (!modelPath) {
    throw new ModelConfigError(
      `model ${name} needs --model-path pointing to a locally converted tfjs LayersModel ` +
        '(pretrained weights are not bundled)',
    )
  }
  const model = await tf.loadLayersModel(fileSystemHandler(modelPath))
  return wrap(model, spec)
}
