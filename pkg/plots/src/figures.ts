/** The figure builders: each consumes run CSVs and writes one SVG. */
import { writeFileSync } from 'node:fs'

import { NoDataError } from './csv.js'
import { EstimatorTrack, RunData } from './data.js'
import { absSkewness, bimodalityScore } from './shape.js'
import { SvgCanvas, extent, linearScale, padded } from './svg.js'

export type FigureKind = 'trajectory-overlay' | 'iterate-convergence' | 'density-heatmap' | 'density-slice'

export interface PlotSpec {
  kind: FigureKind
  run: RunData
  output: string
  /** density-slice only: which step to cut; 'bimodal' and 'skewed' auto-detect */
  slice?: number | 'bimodal' | 'skewed'
  /** density-slice only: steps to exclude from auto-detection */
  excludeSteps?: number[]
  width?: number
  height?: number
}

const LINE_COLOR = '#111111'
const DOT_COLOR = '#e06c00'
const MEAN_COLOR = '#2060c0'
const ITERATE_COLORS = ['#2e8b57', '#e06c00', '#7b3fa0', '#2060c0', '#c03030']

function requireTrack(run: RunData, name: string): EstimatorTrack {
  const track = run.estimators.get(name)
  if (!track || track.steps.length === 0) {
    throw new NoDataError(`run ${run.dir} has no '${name}' estimates`)
  }
  return track
}

/** Reference line + estimator dots, one panel per state component. */
function trajectoryOverlay(spec: PlotSpec): string {
  const run = spec.run
  const dots = requireTrack(run, 'emsf')
  const reference = run.estimators.get('kalman') ?? requireTrack(run, 'pf-mean')
  const referenceName = run.estimators.has('kalman') ? 'kalman' : 'pf-mean'

  const width = spec.width ?? 760
  const panelHeight = 170
  const height = (spec.height ?? panelHeight * run.stateDim) + 30
  const canvas = new SvgCanvas(width, height)
  const margin = { top: 24, right: 20, bottom: 40, left: 58 }

  for (let d = 0; d < run.stateDim; d++) {
    const yTop = margin.top + d * panelHeight
    const yBottom = yTop + panelHeight - margin.bottom
    const xScale = linearScale(extent(run.steps), [margin.left, width - margin.right])
    const component = (track: EstimatorTrack) => track.values.map(v => v[d])
    const yScale = linearScale(
      padded(extent([...component(reference), ...component(dots)])),
      [yBottom, yTop],
    )
    canvas.axes(xScale, yScale, {
      x: d === run.stateDim - 1 ? 'time step k' : undefined,
      y: `state ${d + 1}`,
    })
    canvas.polyline(reference.steps.map(xScale), component(reference).map(yScale), LINE_COLOR, 1.4)
    dots.steps.forEach((k, i) => canvas.circle(xScale(k), yScale(dots.values[i][d]), 2.4, DOT_COLOR, 0.85))
    if (d === 0) {
      canvas.legend(width - 170, yTop + 8, [
        { label: referenceName, color: LINE_COLOR, marker: 'line' },
        { label: 'emsf', color: DOT_COLOR, marker: 'dot' },
      ])
    }
  }
  return canvas.render()
}

/** First state component of every dumped EM iterate path, one color per step. */
function iterateConvergence(spec: PlotSpec): string {
  const run = spec.run
  if (run.iterateDumps.size === 0) throw new NoDataError(`run ${run.dir} has no iterates_k*.csv files`)
  const stepsSorted = [...run.iterateDumps.keys()].sort((a, b) => a - b)

  const width = spec.width ?? 640
  const height = spec.height ?? 360
  const canvas = new SvgCanvas(width, height)
  const margin = { top: 28, right: 20, bottom: 44, left: 58 }

  let maxIter = 1
  const allValues: number[] = []
  for (const dumps of run.iterateDumps.values()) {
    for (const { values } of dumps) {
      maxIter = Math.max(maxIter, values.length - 1)
      for (const v of values) allValues.push(v[0])
    }
  }
  const xScale = linearScale([0, maxIter], [margin.left, width - margin.right])
  const yScale = linearScale(padded(extent(allValues)), [height - margin.bottom, margin.top])
  canvas.axes(xScale, yScale, { x: 'EM iteration i', y: 'first state component' })
  stepsSorted.forEach((k, idx) => {
    const color = ITERATE_COLORS[idx % ITERATE_COLORS.length]
    for (const { values } of run.iterateDumps.get(k)!) {
      const first = values.map(v => v[0])
      canvas.polyline(first.map((_, i) => xScale(i)), first.map(yScale), color, 1.6)
      first.forEach((v, i) => canvas.circle(xScale(i), yScale(v), 2, color))
    }
  })
  canvas.legend(
    width - 120,
    margin.top + 6,
    stepsSorted.map((k, idx) => ({ label: `k = ${k}`, color: ITERATE_COLORS[idx % ITERATE_COLORS.length], marker: 'line' as const })),
  )
  return canvas.render()
}

/** Per-step empirical density as shaded strips with estimator tracks on top. */
function densityHeatmap(spec: PlotSpec): string {
  const run = spec.run
  if (run.stateDim !== 1) throw new NoDataError('density heatmap needs a scalar-state run')
  if (run.densityGrids.size === 0) throw new NoDataError(`run ${run.dir} has no density_k*.csv files`)
  const ks = [...run.densityGrids.keys()].sort((a, b) => a - b)
  const zeta = run.densityGrids.get(ks[0])!.zeta

  const width = spec.width ?? 720
  const height = spec.height ?? 420
  const canvas = new SvgCanvas(width, height)
  const margin = { top: 28, right: 20, bottom: 44, left: 58 }
  const xScale = linearScale([ks[0] - 0.5, ks[ks.length - 1] + 0.5], [margin.left, width - margin.right])
  const yScale = linearScale([zeta[0], zeta[zeta.length - 1]], [height - margin.bottom, margin.top])

  const rowBins = 220
  const binSize = Math.max(1, Math.ceil(zeta.length / rowBins))
  const stripWidth = xScale(ks[0] + 0.5) - xScale(ks[0] - 0.5)
  for (const k of ks) {
    const { density } = run.densityGrids.get(k)!
    const top = Math.max(...density)
    if (!(top > 0)) continue
    for (let start = 0; start < density.length; start += binSize) {
      let peak = 0
      for (let i = start; i < Math.min(start + binSize, density.length); i++) {
        if (density[i] > peak) peak = density[i]
      }
      const opacity = peak / top
      if (opacity < 0.004) continue
      const yHi = yScale(zeta[Math.min(start + binSize, zeta.length - 1)])
      const yLo = yScale(zeta[start])
      canvas.rect(xScale(k - 0.5), yHi, stripWidth, yLo - yHi, '#444444', opacity * 0.9)
    }
  }

  canvas.axes(xScale, yScale, { x: 'time step k', y: 'state' })
  const emsf = requireTrack(run, 'emsf')
  canvas.polyline(emsf.steps.map(xScale), emsf.values.map(v => yScale(v[0])), LINE_COLOR, 1.6)
  const mean = run.estimators.get('pf-mean')
  if (mean) canvas.polyline(mean.steps.map(xScale), mean.values.map(v => yScale(v[0])), MEAN_COLOR, 1.6)
  canvas.legend(width - 150, margin.top + 6, [
    { label: 'emsf mode', color: LINE_COLOR, marker: 'line' },
    ...(mean ? [{ label: 'pf conditional mean', color: MEAN_COLOR, marker: 'line' as const }] : []),
  ])
  return canvas.render()
}

export function pickSliceStep(run: RunData, which: 'bimodal' | 'skewed', exclude: number[] = []): number {
  let bestK = -1
  let bestScore = -Infinity
  for (const [k, { zeta, density }] of run.densityGrids) {
    if (exclude.includes(k)) continue
    const score = which === 'bimodal' ? bimodalityScore(density) : absSkewness(zeta, density)
    if (score > bestScore) {
      bestScore = score
      bestK = k
    }
  }
  if (bestK < 0) throw new NoDataError('no density grids to pick a slice from')
  return bestK
}

/** One density curve with the mode estimate and the conditional mean marked. */
function densitySlice(spec: PlotSpec): string {
  const run = spec.run
  if (run.densityGrids.size === 0) throw new NoDataError(`run ${run.dir} has no density_k*.csv files`)
  const slice = spec.slice ?? 'bimodal'
  const k = typeof slice === 'number' ? slice : pickSliceStep(run, slice, spec.excludeSteps ?? [])
  const grid = run.densityGrids.get(k)
  if (!grid) throw new NoDataError(`no density grid for step ${k}`)

  const width = spec.width ?? 560
  const height = spec.height ?? 360
  const canvas = new SvgCanvas(width, height)
  const margin = { top: 30, right: 20, bottom: 44, left: 64 }
  const xScale = linearScale(extent(grid.zeta), [margin.left, width - margin.right])
  const yScale = linearScale([0, Math.max(...grid.density) * 1.08], [height - margin.bottom, margin.top])
  canvas.axes(xScale, yScale, { x: 'state', y: 'empirical density', title: `step k = ${k}` })
  canvas.polyline(grid.zeta.map(xScale), grid.density.map(yScale), '#444444', 1.5)

  const marker = (name: string, color: string, label: string) => {
    const track = run.estimators.get(name)
    if (!track) return
    const index = track.steps.indexOf(k)
    if (index < 0) return
    const x = xScale(track.values[index][0])
    canvas.line(x, yScale.range[0], x, margin.top + 8, color, 1.6)
    canvas.text(x + 4, margin.top + 18, label, { fill: color, size: 11 })
  }
  marker('emsf', DOT_COLOR, 'x_EMSF')
  marker('pf-mean', MEAN_COLOR, 'x_CM')
  return canvas.render()
}

export function plot(spec: PlotSpec): string {
  let svg: string
  switch (spec.kind) {
    case 'trajectory-overlay':
      svg = trajectoryOverlay(spec)
      break
    case 'iterate-convergence':
      svg = iterateConvergence(spec)
      break
    case 'density-heatmap':
      svg = densityHeatmap(spec)
      break
    case 'density-slice':
      svg = densitySlice(spec)
      break
  }
  writeFileSync(spec.output, svg)
  return spec.output
}
