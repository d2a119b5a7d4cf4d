"""Uplink multiuser MIMO with an electromagnetic lens in front of the array.

Submodules: ``channel_model`` (covariances, lens power distributions,
sampling), ``estimation`` (pilot training and MMSE estimation), ``receiver``
(MMSE and grouped detection, rates), ``analysis`` (average-SNR bounds and
majorization certificates), ``selection`` (antenna selection) and
``harness`` (experiment runner and CLI).
"""

from . import analysis, channel_model, estimation, montecarlo, receiver, selection  # noqa: F401

__version__ = "0.1.0"
