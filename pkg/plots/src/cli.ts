/** make_figures <results_dir> <out_dir>: regenerate the benchmark figures.
 *
 * The input is either a single run directory (holding results.csv) or a
 * directory of runs.  Figures are derived from whatever each run provides:
 * trajectory overlays and iterate-convergence curves from the linear
 * benchmark run, density heatmap and slices from a scalar run with exported
 * density grids.
 */
import { mkdirSync } from 'node:fs'
import { join } from 'node:path'

import { discoverRuns, loadRun, RunData } from './data.js'
import { pickSliceStep, plot } from './figures.js'

export function makeFigures(resultsDir: string, outDir: string): string[] {
  const runDirs = discoverRuns(resultsDir)
  if (runDirs.length === 0) {
    throw new Error(`no runs found under ${resultsDir} (expected results.csv)`)
  }
  const runs = runDirs.map(loadRun)

  // overlay/iterates come from the run with iterate dumps (or widest state),
  // density figures from the scalar run with exported grids
  const byIterates = [...runs].sort(
    (a, b) => b.iterateDumps.size - a.iterateDumps.size || b.stateDim - a.stateDim,
  )
  const overlayRun = byIterates[0]
  const densityRun = runs.find(r => r.stateDim === 1 && r.densityGrids.size > 0)

  mkdirSync(outDir, { recursive: true })
  const written: string[] = []
  const emit = (path: string) => {
    written.push(path)
    console.log(`wrote ${path}`)
  }

  emit(plot({ kind: 'trajectory-overlay', run: overlayRun, output: join(outDir, 'trajectory_overlay.svg') }))
  if (overlayRun.iterateDumps.size > 0) {
    emit(plot({ kind: 'iterate-convergence', run: overlayRun, output: join(outDir, 'iterate_convergence.svg') }))
  }
  if (densityRun) {
    emit(plot({ kind: 'density-heatmap', run: densityRun, output: join(outDir, 'density_heatmap.svg') }))
    const bimodalK = pickSliceStep(densityRun, 'bimodal')
    emit(
      plot({
        kind: 'density-slice',
        run: densityRun,
        slice: bimodalK,
        output: join(outDir, 'density_slice_bimodal.svg'),
      }),
    )
    emit(
      plot({
        kind: 'density-slice',
        run: densityRun,
        slice: 'skewed',
        excludeSteps: [bimodalK],
        output: join(outDir, 'density_slice_skewed.svg'),
      }),
    )
  }
  return written
}

export function main(argv: string[]): number {
  if (argv.length !== 2) {
    console.error('usage: make_figures <results_dir> <out_dir>')
    return 2
  }
  try {
    const written = makeFigures(argv[0], argv[1])
    console.log(`${written.length} figures written to ${argv[1]}`)
    return 0
  } catch (error) {
    console.error(`error: ${error instanceof Error ? error.message : error}`)
    return 1
  }
}

