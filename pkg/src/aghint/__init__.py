"""Attribute-guided representation learning on heterogeneous information networks.

Subpackages:

* :mod:`aghint.hin` -- typed graph, directory format, synthetic generator
* :mod:`aghint.disparity` -- attribute disparity and neighborhood bucketing
* :mod:`aghint.pathsample` -- guidance sets (message weights, sampled sequences)
* :mod:`aghint.ndiff` -- small reverse-mode autodiff engine
* :mod:`aghint.model` -- the network, its ablation variants and checkpoints
* :mod:`aghint.train` -- training loop, metrics, case study
"""

__version__ = "0.1.0"
