/**
 * Minimal OMSB v1 container reader/writer.
 *
 * Layout: "OMSB" magic, version u8 (=1), u32 LE header length, UTF-8 JSON
 * header (entry table + meta), raw little-endian payload. Mirrors the format
 * consumed by the oms-bench CLI; see docs/omsb_format.md in the parent repo.
 */

import { readFileSync, writeFileSync } from 'node:fs'

const MAGIC = 'OMSB'
const VERSION = 1

export type TensorData = Float32Array | Int32Array

export interface Entry {
  dtype: 'f32' | 'i32'
  shape: number[]
  data: TensorData
}

export interface Container {
  entries: Map<string, Entry>
  meta: Record<string, unknown>
}

export class FormatError extends Error {}

function product(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1)
}

export function entry(data: TensorData, shape: number[]): Entry {
  if (product(shape) !== data.length) {
    throw new FormatError(`shape [${shape}] does not match data length ${data.length}`)
  }
  return { dtype: data instanceof Float32Array ? 'f32' : 'i32', shape, data }
}

export function writeContainer(container: Container): Buffer {
  const table: object[] = []
  const chunks: Buffer[] = []
  let offset = 0
  for (const [name, e] of container.entries) {
    if (e.dtype === 'f32') {
      for (const v of e.data) {
        if (!Number.isFinite(v)) throw new FormatError(`entry ${name} contains non-finite values`)
      }
    }
    // typed-array buffers are little-endian on every platform node supports
    const raw = Buffer.from(e.data.buffer, e.data.byteOffset, e.data.byteLength)
    table.push({
      name,
      dtype: e.dtype,
      shape: e.shape,
      byte_offset: offset,
      byte_length: raw.length,
    })
    chunks.push(raw)
    offset += raw.length
  }
  const header = Buffer.from(JSON.stringify({ entries: table, meta: container.meta }), 'utf-8')
  const prefix = Buffer.alloc(9)
  prefix.write(MAGIC, 0, 'ascii')
  prefix.writeUInt8(VERSION, 4)
  prefix.writeUInt32LE(header.length, 5)
  return Buffer.concat([prefix, header, ...chunks])
}

interface HeaderEntry {
  name: string
  dtype: 'f32' | 'i32'
  shape: number[]
  byte_offset: number
  byte_length: number
}

export function readContainer(data: Buffer): Container {
  if (data.length < 9 || data.toString('ascii', 0, 4) !== MAGIC) {
    throw new FormatError('bad magic')
  }
  if (data.readUInt8(4) !== VERSION) throw new FormatError('unsupported version')
  const headerLength = data.readUInt32LE(5)
  if (9 + headerLength > data.length) throw new FormatError('truncated header')
  let header: { entries: HeaderEntry[]; meta?: Record<string, unknown> }
  try {
    header = JSON.parse(data.toString('utf-8', 9, 9 + headerLength))
  } catch (err) {
    throw new FormatError(`header is not valid JSON: ${err}`)
  }
  const payload = data.subarray(9 + headerLength)
  const entries = new Map<string, Entry>()
  for (const rec of header.entries) {
    if (entries.has(rec.name)) throw new FormatError(`duplicate entry ${rec.name}`)
    const count = product(rec.shape)
    if (rec.byte_length !== count * 4) {
      throw new FormatError(`entry ${rec.name}: byte_length does not match shape`)
    }
    if (rec.byte_offset + rec.byte_length > payload.length) {
      throw new FormatError(`entry ${rec.name} extends past the payload`)
    }
    // copy into a fresh, 4-byte-aligned buffer detached from the file bytes
    const copy = new Uint8Array(rec.byte_length)
    copy.set(payload.subarray(rec.byte_offset, rec.byte_offset + rec.byte_length))
    const data_ =
      rec.dtype === 'f32' ? new Float32Array(copy.buffer, 0, count) : new Int32Array(copy.buffer, 0, count)
    entries.set(rec.name, { dtype: rec.dtype, shape: rec.shape, data: data_ })
  }
  return { entries, meta: header.meta ?? {} }
}

export function writeContainerFile(container: Container, path: string): number {
  const buf = writeContainer(container)
  writeFileSync(path, buf)
  return buf.length
}

export function readContainerFile(path: string): Container {
  return readContainer(readFileSync(path))
}
