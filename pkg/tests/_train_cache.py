"""Disk cache of fully trained acceptance models.

Training the published configurations takes minutes to hours, so trained
models are stored under tests/_artifacts keyed by a hash of every setting
that influences the result.  Deleting the directory (or bumping SALT after
changing training-relevant code) forces a retrain.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from pincflow.config import preset_config
from pincflow.network import load_model, save_model
from pincflow.training import best_of_seeds, train_steady, train_transient

CACHE_DIR = Path(__file__).parent / "_artifacts"
SALT = "v1"


def _key(preset: str, regime: str) -> str:
    cfg = preset_config(preset)
    relevant = {
        section: cfg.raw.get(section, {})
        for section in ("system", "normalization", "network", "training")
    }
    payload = json.dumps(relevant, sort_keys=True) + SALT + regime
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def model_path(preset: str, regime: str) -> Path:
    return CACHE_DIR / f"{preset}_{regime}_{_key(preset, regime)}.json"


def trained_model(preset: str, regime: str, log=print):
    """Load the cached model for (preset, regime), training it if missing."""
    path = model_path(preset, regime)
    if path.exists():
        return load_model(path)

    cfg = preset_config(preset)
    sys_ = cfg.fluid_system()
    norm = cfg.normalization()
    arch = cfg.architecture(regime)
    tcfg = cfg.training_config(regime)
    sweep = cfg.seed_sweep()

    ss_model = trained_model(preset, "steady", log=log) if regime == "transient" else None

    log(f"[train-cache] training {preset} {regime} "
        f"(sweep={sweep}, adam={tcfg.adam.epochs}, lbfgs<={tcfg.lbfgs.max_iters}) ...")
    if sweep > 1:
        seeds = [tcfg.sampling_seed + i for i in range(sweep)]
        model, report, summary = best_of_seeds(
            regime, sys_, norm, arch, tcfg, seeds,
            ss_model=ss_model, refine_max_iters=cfg.refine_max_iters() or None,
        )
        for entry in summary:
            log(f"[train-cache]   seed {entry['seed']}: val {entry['val_total']:.3e}")
    elif regime == "steady":
        model, report = train_steady(sys_, norm, arch, tcfg)
    else:
        model, report = train_transient(sys_, norm, arch, tcfg, ss_model)
    log(f"[train-cache] {preset} {regime}: final train "
        f"{report.last_value('total'):.3e}, val {report.last_value('val_total'):.3e}")

    CACHE_DIR.mkdir(exist_ok=True)
    save_model(model, path)
    return model
