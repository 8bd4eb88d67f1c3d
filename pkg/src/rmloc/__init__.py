"""RSS localization on simulated urban radio maps.

Subpackages cover the pipeline end to end: city/scene generation
(:mod:`rmloc.scene`), dominant-path radio simulation (:mod:`rmloc.dpm`),
dataset building (:mod:`rmloc.dataset`), fingerprint and ToA ranging
baselines (:mod:`rmloc.fingerprint`, :mod:`rmloc.ranging`), heat-map
localization and the trained network (:mod:`rmloc.heatmap`,
:mod:`rmloc.locnet`, :mod:`rmloc.train`), and benchmarking
(:mod:`rmloc.bench`). Torch-backed modules are imported lazily.
"""

from . import bench, dataset, dpm, fingerprint, heatmap, ranging, scene

__all__ = ["bench", "dataset", "dpm", "fingerprint", "heatmap", "ranging", "scene"]
__version__ = "0.1.0"
