"""
One runner per CLI subcommand. A runner reads the resolved configuration
Namespace, writes its artifacts into config.out_dir while holding the output
lock and raises the error classes of utilities.errors on failure.
"""
import os
from argparse import Namespace
from typing import Dict
import numpy as np
import pandas as pd
from pilotwave_study import ROOT
from pilotwave_study.dynamics.bohm import continuity_residual
from pilotwave_study.dynamics.branches import screen_crossings, screen_density_distribution, \
    screen_flux_distribution
from pilotwave_study.dynamics.schrodinger import SnapshotSeries, evolve
from pilotwave_study.dynamics.trajectories import TrajectoryEnsemble, advance_ensemble, sampled_ensemble
from pilotwave_study.fields.field_io import save_field_csv
from pilotwave_study.models import strocchi_heslot as sh
from pilotwave_study.models.fw_gauge import gauge_velocity_shift, make_gauge, random_hermitian, random_unitary
from pilotwave_study.models.hmm_builder import build_model, certify_equivariance
from pilotwave_study.models.toy_models import (cycle_determinism, find_witness, full_pause_years, run,
                                               trace_frame)
from pilotwave_study.scenarios.presets import build_grid, build_hamiltonian, density_provider, initial_state
from pilotwave_study.utilities.errors import CertificationError, ConfigError
from pilotwave_study.utilities.evaluate import evaluate
from pilotwave_study.utilities.metrics import bin_counts, bin_density, count_peaks, total_variation
from pilotwave_study.utilities.utils import lock_output, log, write_manifest, write_yaml

SCREEN_AXIS = 1


def _evolve(config: Namespace) -> SnapshotSeries:
    grid = build_grid(config.grid)
    spec = build_hamiltonian(config, grid)
    psi0 = initial_state(config, grid)
    solver = config.solver
    if config.verbose:
        print(f'Evolving {config.state.preset} on a {grid.shape} grid from t={solver.t0} to t={solver.t1}')
    series = evolve(psi0, spec, solver.t0, solver.t1, solver.dt, solver.store_every, solver.name,
                    solver.tol, solver.max_iter, progress=config.verbose, config_hash=config.hash)
    log({'evolve/norm_drift': series.norm_drift()}, config)
    return series


def _trajectories(config: Namespace, series: SnapshotSeries, n_particles: int = None) -> TrajectoryEnsemble:
    traj = config.trajectories
    n_particles = traj.particles if n_particles is None else n_particles
    ensemble = sampled_ensemble(series.density(0), n_particles, config.seed, config.hash)
    return advance_ensemble(ensemble, series, traj.dt, floor=traj.floor, chunk_size=traj.chunk_size,
                            threads=config.threads, progress=config.verbose)


def _save_ensemble(config: Namespace, ensemble: TrajectoryEnsemble) -> None:
    if config.output.csv:
        ensemble.save_csv(os.path.join(config.out_dir, 'trajectories.csv'))
    if config.output.binary:
        ensemble.save_binary(os.path.join(config.out_dir, 'trajectories.bin'))


def run_evolve(config: Namespace) -> Dict:
    with lock_output(config.out_dir):
        series = _evolve(config)
        report = {
            'times': series.times,
            'norm_drift': series.norm_drift(),
            'solver': series.solver,
        }
        if len(series) >= 3:
            report['continuity_residual'] = continuity_residual(series)
            log({'evolve/continuity_residual': report['continuity_residual']}, config)
        series.save(os.path.join(config.out_dir, 'snapshots'))
        if config.output.csv:
            save_field_csv(os.path.join(config.out_dir, 'density_final.csv'), series.density(len(series) - 1))
        write_yaml(os.path.join(config.out_dir, 'evolve.yaml'), report)
        write_manifest(config)
    print(f'evolve: {len(series)} snapshots, norm drift {report["norm_drift"]:.2e}')
    return report


def run_trajectories(config: Namespace) -> Dict:
    with lock_output(config.out_dir):
        series = _evolve(config)
        ensemble = _trajectories(config, series)
        reports = evaluate(config, ensemble, series.density, series.times)
        displacement = np.linalg.norm(ensemble.final - ensemble.positions[:, 0], axis=1)
        report = {
            'n_particles': ensemble.n_particles,
            'seed': config.seed,
            'exited': int(ensemble.exited.sum()),
            'max_displacement': float(displacement.max()),
            'reports': [r.to_dict() for r in reports],
        }
        _save_ensemble(config, ensemble)
        write_yaml(os.path.join(config.out_dir, 'equivariance.yaml'), report)
        write_manifest(config)
    if not all(r.passed for r in reports):
        raise CertificationError(f'equivariance rejected at t={[r.t for r in reports if not r.passed]}')
    return report


def run_double_slit(config: Namespace) -> Dict:
    """
    Every particle is one run of the experiment; its landing site is its first
    crossing of the screen line. The landing histogram is gated against the
    time-integrated current through the screen; its distance to the
    time-integrated density on the screen line is reported alongside.
    """
    runs = config.runs if getattr(config, 'runs', None) else config.trajectories.particles
    traj = config.trajectories
    with lock_output(config.out_dir):
        series = _evolve(config)
        if series.grid.ndim != 2:
            raise ConfigError('double-slit runs on a two-dimensional grid')
        ensemble = _trajectories(config, series, runs)
        sites = screen_crossings(ensemble, SCREEN_AXIS, traj.screen)
        landed = sites[np.isfinite(sites[:, 0])]
        grid = series.grid
        other = 1 - SCREEN_AXIS
        edges = np.linspace(grid.lower[other], grid.upper[other], traj.screen_bins + 1)
        histogram = bin_counts(landed[:, other], edges)
        x, flux = screen_flux_distribution(series, SCREEN_AXIS, traj.screen)
        born = bin_density(x, flux, edges)
        tv = total_variation(histogram, born)
        x, marginal = screen_density_distribution(series, SCREEN_AXIS, traj.screen)
        density = bin_density(x, marginal, edges)
        tv_density = total_variation(histogram, density)
        fringes = count_peaks(histogram)

        report = {
            'runs': int(runs),
            'landed': int(len(landed)),
            'screen': float(traj.screen),
            'tv_distance': tv,
            'tv_density': tv_density,
            'tv_threshold': traj.tv_threshold,
            'fringes': int(fringes),
            'born_fringes': int(count_peaks(born)),
        }
        log({'double_slit/tv_distance': tv, 'double_slit/tv_density': tv_density,
             'double_slit/fringes': fringes,
             'double_slit/landing_sites': landed[:, other]}, config)
        pd.DataFrame({'run': np.flatnonzero(np.isfinite(sites[:, 0])), 'x': landed[:, other]}) \
            .to_csv(os.path.join(config.out_dir, 'landing_sites.csv'), index=False, float_format='%.17g')
        pd.DataFrame({'left': edges[:-1], 'right': edges[1:], 'runs': histogram, 'born': born,
                      'density': density}) \
            .to_csv(os.path.join(config.out_dir, 'histogram.csv'), index=False, float_format='%.17g')
        write_yaml(os.path.join(config.out_dir, 'double_slit.yaml'), report)
        write_manifest(config)

    print(f'double-slit: {len(landed)}/{runs} landed, {fringes} fringes, TV {tv:.4f}')
    if tv >= traj.tv_threshold or fringes < 3:
        raise CertificationError(f'landing histogram rejected (TV {tv:.4f}, {fringes} fringes)')
    return report


def run_gauge_compare(config: Namespace) -> Dict:
    g = config.gauge
    with lock_output(config.out_dir):
        series = _evolve(config)
        gauge = make_gauge(g.kind, series.grid, g.strength, g.center, g.core_radius, config.seed)
        ensemble = sampled_ensemble(series.density(0), config.trajectories.particles, config.seed, config.hash)
        threshold = config.trajectories.tv_threshold if series.grid.ndim == 1 else None
        comparison = gauge_velocity_shift(ensemble, series, gauge, config.trajectories.dt, g.tolerance,
                                          config.trajectories.floor, config.trajectories.chunk_size,
                                          config.threads, config.trajectories.resamples, threshold)
        report = comparison.to_dict()
        log({'gauge/restriction_residual': comparison.restriction_residual,
             'gauge/final_max_deviation': float(comparison.max_deviation[-1]),
             'gauge/histogram_tv': comparison.histogram_tv}, config)
        pd.DataFrame({'t': comparison.times, 'max_deviation': comparison.max_deviation}) \
            .to_csv(os.path.join(config.out_dir, 'deviation.csv'), index=False, float_format='%.17g')
        write_yaml(os.path.join(config.out_dir, 'gauge_compare.yaml'), report)
        write_manifest(config)

    print(f'gauge-compare: restriction residual {comparison.restriction_residual:.2e}, '
          f'max deviation {comparison.max_deviation[-1]:.3e}')
    if not (comparison.reference.passed and comparison.gauged.passed):
        raise CertificationError('gauged or reference ensemble left the Born density')
    return report


def run_hmm_build(config: Namespace) -> Dict:
    hmm = config.hmm
    solver = config.solver
    with lock_output(config.out_dir):
        if hmm.density == 'pilot-wave':
            series = _evolve(config)
            grid, times = series.grid, series.times
        else:
            series = None
            grid = build_grid(config.grid)
            n_times = int(round((solver.t1 - solver.t0) / hmm.store_dt))
            times = solver.t0 + hmm.store_dt * np.arange(n_times + 1)
        provider = density_provider(config, grid, series)
        try:
            model = build_model(provider, times, hmm.coefficients, hmm.references)
        except ValueError as err:
            raise ConfigError(f'hmm: {err}') from err
        threshold = config.trajectories.tv_threshold if grid.ndim == 1 else None
        dt_traj = min(config.trajectories.dt, float(np.min(np.diff(times))))
        certification = certify_equivariance(model, config.trajectories.particles, config.seed,
                                             dt_traj=dt_traj, floor=config.trajectories.floor,
                                             resamples=config.trajectories.resamples, tv_threshold=threshold,
                                             chunk_size=config.trajectories.chunk_size, threads=config.threads,
                                             progress=config.verbose)
        report = certification.to_dict()
        log({'hmm/worst_tv': certification.worst_tv, **{f'hmm/{k}': v for k, v in model.audits.items()}}, config)
        model.save(os.path.join(config.out_dir, 'model'))
        write_yaml(os.path.join(config.out_dir, 'certification.yaml'), report)
        write_manifest(config)

    print(f'hmm-build: worst TV {certification.worst_tv:.4f}, '
          f'{"certified" if certification.certified else "not certified"}')
    if not certification.certified:
        raise CertificationError('the built model does not transport rho(t0) to rho(t)')
    return report


def run_shoemaker(config: Namespace) -> Dict:
    years = config.years
    with lock_output(config.out_dir):
        trace = run(years, progress=config.verbose)
        witness = find_witness(trace, lambda s: s.visible)
        report = {
            'years': years,
            'witness': None if witness is None else witness.to_dict(),
            'augmented_deterministic': cycle_determinism(cycles=1),
            'full_pause_years': full_pause_years(years),
        }
        if config.output.csv:
            trace_frame(trace).to_csv(os.path.join(config.out_dir, 'trace.csv'), index=False)
        write_yaml(os.path.join(config.out_dir, 'shoemaker.yaml'), report)
        write_manifest(config, {'years': years})

    print(f'shoemaker: {years} years, witness {"found" if witness else "absent"}, '
          f'pauses in {report["full_pause_years"]}')
    if not report['augmented_deterministic']:
        raise CertificationError('visible state plus clock is not deterministic')
    return report


def run_phase_space(config: Namespace) -> Dict:
    """Flow equivalence, canonical brackets, unitary canonicality and the oscillator frame swap."""
    rng = np.random.default_rng(config.seed)
    flows = []
    for d in (2, 4, 8):
        H = random_hermitian(d, rng)
        c0 = rng.normal(size=d) + 1j * rng.normal(size=d)
        c0 /= np.linalg.norm(c0)
        flows.append({'dimension': d, 'residual': sh.flow_equivalence(H, c0, config.solver.hbar)})

    d = 4
    point = sh.PhasePoint(rng.normal(size=d), rng.normal(size=d), config.solver.hbar)
    brackets = np.array([[sh.poisson_bracket(sh.coordinate(k, d), sh.momentum(j, d), point) for j in range(d)]
                         for k in range(d)])
    real_form = sh.unitary_real_form(random_unitary(d, rng))
    unitary = sh.canonical_check(lambda z: real_form @ z, d, seed=config.seed, num_processes=config.threads)
    scaling = sh.canonical_check(lambda z: np.concatenate([2 * z[:d], z[d:]]), d, seed=config.seed,
                                 num_processes=config.threads)
    swaps = [dict(sh.frame_swap_audit(1.0, 0.5, m, k), m=m, k=k) for m, k in ((1.0, 1.0), (2.0, 8.0))]

    report = {
        'flow_equivalence': flows,
        'bracket_violation': float(np.max(np.abs(brackets - np.eye(d)))),
        'unitary_canonical': unitary.to_dict(),
        'scaling_canonical': scaling.to_dict(),
        'frame_swap': swaps,
    }
    with lock_output(config.out_dir):
        write_yaml(os.path.join(config.out_dir, 'phase_space.yaml'), report)
        write_manifest(config)
    log({'phase_space/flow_residual': max(f['residual'] for f in flows),
         'phase_space/bracket_violation': report['bracket_violation']}, config)

    print(f'phase-space: worst flow residual {max(f["residual"] for f in flows):.2e}, '
          f'bracket violation {report["bracket_violation"]:.2e}')
    failed = (max(f['residual'] for f in flows) >= 1e-6 or report['bracket_violation'] >= 1e-6
              or not unitary.canonical or scaling.canonical
              or max(s['max_trajectory_difference'] for s in swaps) >= 1e-8)
    if failed:
        raise CertificationError('a phase-space property was rejected')
    return report


def run_selftest(config: Namespace) -> int:
    import pytest
    args = [str(ROOT.parent / 'tests'), '-q']
    if not config.verbose:
        args += ['-p', 'no:cacheprovider']
    return pytest.main(args)


RUNNERS = {
    'evolve': run_evolve,
    'trajectories': run_trajectories,
    'double-slit': run_double_slit,
    'gauge-compare': run_gauge_compare,
    'hmm-build': run_hmm_build,
    'shoemaker': run_shoemaker,
    'phase-space': run_phase_space,
    'selftest': run_selftest,
}
