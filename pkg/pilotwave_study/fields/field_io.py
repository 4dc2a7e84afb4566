"""
Binary and CSV persistence for grid fields.

Binary layout (little endian):
    16-byte header: magic b'PWFIELD\\0', uint32 version, uint32 kind (0 real, 1 complex)
    uint32 n
    per axis: float64 lower, float64 upper, uint32 count, uint32 mode (0 periodic, 1 dirichlet)
    float64 timestamp
    float64 values, row-major, axis 0 slowest; complex values as (re, im) pairs
"""
import struct
from typing import Union, Tuple
import numpy as np
import pandas as pd
from pilotwave_study.fields.grid import Grid, RealField, ComplexField, PERIODIC, DIRICHLET

MAGIC = b'PWFIELD\x00'
VERSION = 1
KIND_REAL, KIND_COMPLEX = 0, 1
MODES = {PERIODIC: 0, DIRICHLET: 1}
CSV_MAX_POINTS = 1 << 20


def _pack_header(grid: Grid, kind: int, t: float, magic: bytes = MAGIC) -> bytes:
    header = magic + struct.pack('<II', VERSION, kind) + struct.pack('<I', grid.ndim)
    for lo, hi, n, mode in zip(grid.lower, grid.upper, grid.counts, grid.boundaries):
        header += struct.pack('<ddII', lo, hi, n, MODES[mode])
    return header + struct.pack('<d', t)


def _unpack_header(buffer: bytes, magic: bytes = MAGIC) -> Tuple[dict, int]:
    if buffer[:8] != magic:
        raise ValueError('not a pilotwave binary file (bad magic)')
    version, kind = struct.unpack_from('<II', buffer, 8)
    if version != VERSION:
        raise ValueError(f'unsupported format version {version}')
    (ndim,) = struct.unpack_from('<I', buffer, 16)
    offset = 20
    lower, upper, counts, modes = [], [], [], []
    inverse = {v: k for k, v in MODES.items()}
    for _ in range(ndim):
        lo, hi, n, mode = struct.unpack_from('<ddII', buffer, offset)
        offset += 24
        lower.append(lo)
        upper.append(hi)
        counts.append(n)
        modes.append(inverse[mode])
    (t,) = struct.unpack_from('<d', buffer, offset)
    offset += 8
    return {'kind': kind, 'lower': lower, 'upper': upper, 'counts': counts,
            'boundaries': modes, 't': t}, offset


def field_to_bytes(f: Union[RealField, ComplexField]) -> bytes:
    if isinstance(f, ComplexField):
        kind = KIND_COMPLEX
        data = np.ascontiguousarray(f.values, dtype='<c16').view('<f8')
    else:
        kind = KIND_REAL
        data = np.ascontiguousarray(f.values, dtype='<f8')
    return _pack_header(f.grid, kind, f.t) + data.tobytes()


def field_from_bytes(buffer: bytes, metric: np.ndarray = None) -> Union[RealField, ComplexField]:
    meta, offset = _unpack_header(buffer)
    grid = Grid(meta['lower'], meta['upper'], meta['counts'], meta['boundaries'], metric=metric)
    data = np.frombuffer(buffer, dtype='<f8', offset=offset)
    if meta['kind'] == KIND_COMPLEX:
        return ComplexField(grid, data.view('<c16').reshape(grid.shape), meta['t'])
    return RealField(grid, data.reshape(grid.shape), meta['t'])


def save_field(path: str, f: Union[RealField, ComplexField]) -> None:
    with open(path, 'wb') as fh:
        fh.write(field_to_bytes(f))


def load_field(path: str, metric: np.ndarray = None, grid: Grid = None) -> Union[RealField, ComplexField]:
    """Reads a binary field. Pass grid to re-attach a grid with its metric."""
    with open(path, 'rb') as fh:
        f = field_from_bytes(fh.read(), metric=metric)
    if grid is not None:
        if tuple(grid.counts) != tuple(f.grid.counts):
            raise ValueError('stored field does not match the supplied grid')
        f = type(f)(grid, f.values, f.t)
    return f


def field_to_frame(f: Union[RealField, ComplexField]) -> pd.DataFrame:
    """Point coordinates plus value columns; only for small grids."""
    if f.grid.size > CSV_MAX_POINTS:
        raise ValueError(f'CSV export is limited to {CSV_MAX_POINTS} points')
    columns = {f'q{i + 1}': axis.ravel() for i, axis in enumerate(f.grid.mesh())}
    if isinstance(f, ComplexField):
        columns['re'] = f.values.real.ravel()
        columns['im'] = f.values.imag.ravel()
    else:
        columns['value'] = f.values.ravel()
    frame = pd.DataFrame(columns)
    frame.insert(0, 't', f.t)
    return frame


def save_field_csv(path: str, f: Union[RealField, ComplexField]) -> None:
    field_to_frame(f).to_csv(path, index=False, float_format='%.17g')
