/** Loading and discovery of experiment run directories. */
import { existsSync, readdirSync } from 'node:fs'
import { join } from 'node:path'

import { NoDataError, numericColumn, readCsv, requireColumns, stringColumn } from './csv.js'

export interface EstimatorTrack {
  steps: number[]
  /** values[i][d] = component d of the estimate at steps[i] */
  values: number[][]
}

export interface RunData {
  dir: string
  stateDim: number
  steps: number[]
  truth: number[][]
  estimators: Map<string, EstimatorTrack>
  densityGrids: Map<number, { zeta: number[]; density: number[] }>
  iterateDumps: Map<number, Array<{ restart: number; values: number[][] }>>
}

export function loadRun(dir: string): RunData {
  const resultsPath = join(dir, 'results.csv')
  const table = readCsv(resultsPath)
  requireColumns(table, ['k', 'estimator'], resultsPath)
  if (table.rows.length === 0) throw new NoDataError(`no data rows in ${resultsPath}`)

  const estCols = table.columns.filter(c => /^est_\d+$/.test(c))
  const trueCols = table.columns.filter(c => /^true_\d+$/.test(c))
  if (estCols.length === 0 || trueCols.length !== estCols.length) {
    throw new NoDataError(`${resultsPath} lacks matching est_*/true_* columns`)
  }
  const stateDim = estCols.length

  const ks = numericColumn(table, 'k')
  const names = stringColumn(table, 'estimator')
  const estValues = estCols.map(c => numericColumn(table, c))
  const trueValues = trueCols.map(c => numericColumn(table, c))

  const estimators = new Map<string, EstimatorTrack>()
  const truthByStep = new Map<number, number[]>()
  for (let i = 0; i < ks.length; i++) {
    const track = estimators.get(names[i]) ?? { steps: [], values: [] }
    track.steps.push(ks[i])
    track.values.push(estValues.map(col => col[i]))
    estimators.set(names[i], track)
    truthByStep.set(ks[i], trueValues.map(col => col[i]))
  }
  const steps = [...truthByStep.keys()].sort((a, b) => a - b)
  const truth = steps.map(k => truthByStep.get(k)!)

  const densityGrids = new Map<number, { zeta: number[]; density: number[] }>()
  const iterateDumps = new Map<number, Array<{ restart: number; values: number[][] }>>()
  for (const entry of readdirSync(dir)) {
    const densityMatch = entry.match(/^density_k(\d+)\.csv$/)
    if (densityMatch) {
      const grid = readCsv(join(dir, entry))
      requireColumns(grid, ['zeta', 'density'], join(dir, entry))
      densityGrids.set(Number(densityMatch[1]), {
        zeta: numericColumn(grid, 'zeta'),
        density: numericColumn(grid, 'density'),
      })
    }
    const iterMatch = entry.match(/^iterates_k(\d+)\.csv$/)
    if (iterMatch) {
      const dump = readCsv(join(dir, entry))
      requireColumns(dump, ['restart', 'iter', 'zeta_1'], join(dir, entry))
      const restarts = numericColumn(dump, 'restart')
      const zetaCols = dump.columns.filter(c => /^zeta_\d+$/.test(c)).map(c => numericColumn(dump, c))
      const byRestart = new Map<number, number[][]>()
      for (let i = 0; i < restarts.length; i++) {
        const path = byRestart.get(restarts[i]) ?? []
        path.push(zetaCols.map(col => col[i]))
        byRestart.set(restarts[i], path)
      }
      iterateDumps.set(
        Number(iterMatch[1]),
        [...byRestart.entries()].sort((a, b) => a[0] - b[0]).map(([restart, values]) => ({ restart, values })),
      )
    }
  }

  return { dir, stateDim, steps, truth, estimators, densityGrids, iterateDumps }
}

/** A run directory is anything holding a results.csv; parents are scanned one level deep. */
export function discoverRuns(root: string): string[] {
  if (existsSync(join(root, 'results.csv'))) return [root]
  const runs: string[] = []
  for (const entry of readdirSync(root, { withFileTypes: true })) {
    if (entry.isDirectory() && existsSync(join(root, entry.name, 'results.csv'))) {
      runs.push(join(root, entry.name))
    }
  }
  runs.sort()
  return runs
}
