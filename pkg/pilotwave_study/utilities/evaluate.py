from argparse import Namespace
from typing import Callable, List, Sequence
import numpy as np
from tqdm import tqdm
from pilotwave_study.dynamics.trajectories import EquivarianceReport, TrajectoryEnsemble, equivariance_report
from pilotwave_study.fields.grid import RealField
from pilotwave_study.utilities.utils import log


def evaluate(config: Namespace, ensemble: TrajectoryEnsemble, density: Callable[[int], RealField],
             times: Sequence[float], tv_threshold: float = None, prefix: str = 'equivariance') -> List[EquivarianceReport]:
    """
    Common evaluation method. Compares the ensemble with the Born density at
    every stored time, prints a status line and logs TV, KS and baseline.

    Args:
        config (Namespace): configuration object.
        ensemble (TrajectoryEnsemble): integrated ensemble
        density (Callable): k -> density at times[k]
        times (Sequence): evaluation times
        tv_threshold (float): absolute TV bound, defaults to trajectories.tv_threshold;
            ignored above one dimension
        prefix (str): logging namespace
    """
    threshold = config.trajectories.tv_threshold if tv_threshold is None else tv_threshold
    if ensemble.grid.ndim > 1:
        # grid-cell TV at desk-scale N only reaches the absolute bound in 1D
        threshold = None

    reports = []
    for k, t in enumerate(tqdm(times, desc='Equivariance', disable=not config.verbose)):
        report = equivariance_report(ensemble, density(k), t, config.trajectories.resamples, threshold,
                                     config.threads)
        reports.append(report)
        config.step = k
        log({f'{prefix}/tv_distance': report.tv,
             f'{prefix}/baseline_tv': report.baseline,
             f'{prefix}/ks_max': float(np.max(report.ks))}, config)
        if config.verbose:
            print(f't={t:.4f} TV={report.tv:.4f} baseline={report.baseline:.4f} '
                  f'KS={np.max(report.ks):.4f} {"ok" if report.passed else "FAIL"}')

    worst = max(r.tv for r in reports)
    print(f'{prefix}: worst TV {worst:.4f} over {len(reports)} times, '
          f'{sum(r.passed for r in reports)}/{len(reports)} passed')
    return reports
