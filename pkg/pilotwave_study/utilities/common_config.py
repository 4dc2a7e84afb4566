from pilotwave_study.utilities.utils import str_to_bool

# Section-wise defaults of a scenario file. A key that is not listed here is
# rejected when the file is loaded.
CONFIG_DEFAULTS = {
    'grid': {
        'lower': [-20.0],
        'upper': [20.0],
        'points': [256],
        'boundary': ['periodic'],
        'masses': [1.0],
        'max_points': 2 ** 24,
    },
    'state': {
        'preset': 'gaussian-packet',
        'center': [0.0],
        'sigma': [1.0],
        'momentum': [0.0],
        'separation': 4.0,
    },
    'solver': {
        'name': 'auto',
        'hbar': 1.0,
        'potential': 'free',
        'spring': 1.0,
        't0': 0.0,
        't1': 1.0,
        'dt': 0.005,
        'store_every': 20,
        'tol': 1e-10,
        'max_iter': 500,
    },
    'trajectories': {
        'particles': 10000,
        'dt': 0.01,
        'floor': 1e-12,
        'chunk_size': 2048,
        'tv_threshold': 0.05,
        'resamples': 20,
        'screen': 16.0,
        'screen_bins': 48,
    },
    'gauge': {
        'kind': 'azimuthal',
        'strength': 1.0,
        'center': [0.0, 0.0],
        'core_radius': 0.5,
        'tolerance': 1e-3,
    },
    'hmm': {
        'density': 'moving-gaussian',
        'velocity': 1.0,
        'sigma': 1.0,
        'amplitude': 0.3,
        'omega': 2.0,
        'epsilon': 0.5,
        'coefficients': None,
        'references': None,
        'store_dt': 0.05,
    },
    'output': {
        'directory': 'runs',
        'csv': True,
        'binary': True,
    },
}


def common_config(parser):
    # General script settings
    parser.add_argument('--config', '-c', type=str, default=None,
                        help='YAML scenario file, sections mirror the library modules')
    parser.add_argument('--seed', type=int, default=10, help='Random seed')
    parser.add_argument('--out', '-o', type=str, default=None,
                        help='Output directory, overrides output.directory of the scenario file')
    parser.add_argument('--threads', '-t', type=int, default=1,
                        help='Worker threads for particle integration')
    parser.add_argument('--verbose', '-v', action='store_true',
                        help='Show progress bars and per-step diagnostics')

    # Logging settings
    parser.add_argument('--disable_wandb', '-dw', type=str_to_bool,
                        default=True, help='disable wandb logging')
    parser.add_argument('--name_add', '-nam', type=str, default='', help='option to add to the name string')
    return parser
