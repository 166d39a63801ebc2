"""Chain persistence: a byte-reproducible ``.npz`` container plus a JSON manifest.

``numpy.savez`` stamps zip members with the current time, so two identical
chains would not produce identical files; :func:`save_chain` writes the
archive itself with a fixed timestamp.  The result is still readable with
``numpy.load``.
"""

import csv
import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import ArtifactMismatch
from .gibbs import McmcChain

FORMAT = "pglmm-chain/1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def manifest_path(path):
    return Path(str(path) + ".json")


def _write_npz(path, arrays):
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]),
                                      allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o600 << 16
            zf.writestr(info, buf.getvalue())


def chain_manifest(chain):
    return {
        "format": FORMAT,
        "seed": chain.seed,
        "n_iterations": chain.n_iterations,
        "n_burn_in": chain.n_burn_in,
        "n_draws": len(chain),
        "n_phi": len(chain.phi),
        "has_ystar": chain.ystar is not None,
        **chain.meta,
    }


def save_chain(chain, path):
    """Write ``chain`` to ``path`` and its manifest to ``path + '.json'``."""
    path = Path(path)
    arrays = {k: getattr(chain, k) for k in McmcChain.ARRAYS}
    for j, p in enumerate(chain.phi):
        arrays[f"phi_{j}"] = p
    if chain.ystar is not None:
        arrays["ystar"] = chain.ystar
    _write_npz(path, arrays)
    manifest = chain_manifest(chain)
    manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_chain(path):
    path = Path(path)
    mpath = manifest_path(path)
    if not mpath.exists():
        raise ArtifactMismatch(f"manifest {mpath} not found next to chain file")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format") != FORMAT:
        raise ArtifactMismatch(f"unsupported chain format {manifest.get('format')!r}")
    with np.load(path, allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in McmcChain.ARRAYS}
        phi = [npz[f"phi_{j}"] for j in range(manifest["n_phi"])]
        ystar = npz["ystar"] if manifest["has_ystar"] else None
    meta = {k: manifest[k] for k in ("spec", "priors", "data", "fingerprints", "fixed")
            if k in manifest}
    chain = McmcChain(**arrays, phi=phi, ystar=ystar,
                      n_iterations=manifest["n_iterations"],
                      n_burn_in=manifest["n_burn_in"], seed=manifest["seed"], meta=meta)
    if len(chain) != manifest["n_draws"]:
        raise ArtifactMismatch("chain length does not match its manifest")
    return chain


def write_trace_csv(chain, path):
    """One row per retained draw: zeta, sigma2 and every beta component."""
    names = chain.meta.get("data", {}).get("fe_names") or \
        [f"b{k}" for k in range(chain.beta.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["draw", "zeta", "sigma2"] + [f"beta_{nm}" for nm in names])
        for h in range(len(chain)):
            w.writerow([h, repr(float(chain.zeta[h])), repr(float(chain.sigma2[h]))]
                       + [repr(float(b)) for b in chain.beta[h]])
