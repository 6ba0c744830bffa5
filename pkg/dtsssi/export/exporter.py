"""Writing and reading ensembles, tables and reports.

Bulk numbers go to CSV (and optionally HDF5), structured results to JSON. Files carry no timestamps so
that identical runs produce identical bytes."""
import csv
import json
import os

import h5py
import numpy as np

from dtsssi.core.errors import SizeError
from dtsssi.core.paths import PathEnsemble
from dtsssi.core.scripts import package_version

ENSEMBLE_CSV = 'ensemble.csv'
ENSEMBLE_H5 = 'ensemble.h5'
META_JSON = 'meta.json'
FORMATS = ('csv', 'h5')


def _fmt(value):
    return repr(float(value))


def write_json(obj, path):
    with open(path, 'w') as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write('\n')


def read_json(path):
    with open(path) as f:
        return json.load(f)


def write_ensemble_csv(ens, path):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['path', 'n', 'value'])
        for i, row in enumerate(ens.values):
            writer.writerows([i, n, _fmt(value)] for n, value in enumerate(row))


def read_ensemble_csv(path, meta=None, master_seed=0):
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader)
        assert header == ['path', 'n', 'value'], f'{path} is not an ensemble CSV, header is {header}'
        rows = [(int(i), int(n), float(v)) for i, n, v in reader]
    if not rows:
        raise SizeError(f'{path} holds no paths')
    M, N1 = max(r[0] for r in rows) + 1, max(r[1] for r in rows) + 1
    values = np.full((M, N1), np.nan)
    for i, n, v in rows:
        values[i, n] = v
    assert not np.isnan(values).any(), f'{path} has missing (path, n) rows'
    return PathEnsemble(values, meta or {}, master_seed)


def _create_dataset(h5_file, key, matrix, dtype, compression='gzip'):
    h5_file.create_dataset(key,
                           data=matrix,
                           maxshape=tuple([None] + list(matrix.shape[1:])),
                           chunks=tuple([1] + list(matrix.shape[1:])),
                           dtype=dtype,
                           compression=compression,
                           track_times=False)


def write_ensemble_h5(ens, path, compression='gzip'):
    with h5py.File(path, 'w', track_order=True) as h5:
        _create_dataset(h5, '/data/paths', ens.values, np.float64, compression)
        _create_dataset(h5, '/data/seeds', np.array(ens.seeds, dtype=np.uint64), np.uint64, compression)
        h5.attrs['meta'] = json.dumps(ens.meta, sort_keys=True)
        h5.attrs['master_seed'] = str(ens.master_seed)
        h5.attrs['dtsssi_version'] = package_version()


def read_ensemble_h5(path):
    with h5py.File(path, 'r') as h5:
        values = h5['/data/paths'][:]
        seeds = tuple(int(s) for s in h5['/data/seeds'][:])
        meta = json.loads(h5.attrs['meta'])
        master_seed = int(h5.attrs['master_seed'])
    return PathEnsemble(values, meta, master_seed, seeds)


def ensemble_meta(ens):
    return {**ens.meta, 'master_seed': ens.master_seed, 'M': ens.M, 'N': ens.N, 'dtsssi_version': package_version()}


class EnsembleExportController(object):
    """Writes an ensemble with its meta data into an output directory and loads it back."""

    def __init__(self, output_dir, formats=('csv',), compression='gzip'):
        unknown = set(formats) - set(FORMATS)
        assert not unknown, f'unknown output format(s) {sorted(unknown)}, known: {FORMATS}'
        self.output_dir = output_dir
        self.formats = tuple(formats)
        self.compression = compression

    def path(self, name):
        return os.path.join(self.output_dir, name)

    def export(self, ens):
        os.makedirs(self.output_dir, exist_ok=True)
        written = []
        if 'csv' in self.formats:
            write_ensemble_csv(ens, self.path(ENSEMBLE_CSV))
            written.append(self.path(ENSEMBLE_CSV))
        if 'h5' in self.formats:
            write_ensemble_h5(ens, self.path(ENSEMBLE_H5), self.compression)
            written.append(self.path(ENSEMBLE_H5))
        write_json(ensemble_meta(ens), self.path(META_JSON))
        written.append(self.path(META_JSON))
        return written

    def load(self):
        if os.path.isfile(self.path(ENSEMBLE_H5)):
            return read_ensemble_h5(self.path(ENSEMBLE_H5))
        if not os.path.isfile(self.path(ENSEMBLE_CSV)):
            raise SizeError(f'no ensemble found in {self.output_dir}, run "generate" first')
        meta = read_json(self.path(META_JSON)) if os.path.isfile(self.path(META_JSON)) else {}
        master_seed = int(meta.pop('master_seed', 0))
        for key in ('M', 'N', 'dtsssi_version'):
            meta.pop(key, None)
        return read_ensemble_csv(self.path(ENSEMBLE_CSV), meta, master_seed)


def write_layer_energy_csv(rows, p, path):
    """Plot data: layer (= p^m), m, energy, stderr, ratio to the previous layer."""
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['layer', 'm', 'energy', 'stderr', 'ratio'])
        for m, energy, stderr, ratio in rows:
            writer.writerow([p ** m, m, _fmt(energy), _fmt(stderr), '' if np.isnan(ratio) else _fmt(ratio)])


def write_tables_json(tables, path, aggregate=False):
    """Per path tables, or only their mean when `aggregate` is set."""
    if aggregate:
        mean = tables[0].__class__(tables[0].p, tables[0].H, tables[0].M_max,
                                   np.mean([t.values for t in tables], axis=0), tables[0].N_used,
                                   complex(np.mean([t.constant_term for t in tables])), tables[0].kind)
        write_json({'aggregate': 'mean', 'n_tables': len(tables), 'table': mean.to_json()}, path)
    else:
        write_json({'n_tables': len(tables), 'tables': [t.to_json() for t in tables]}, path)
