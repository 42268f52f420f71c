"""Orientation-dependent Wilson-Cowan contrast perception on cake-wavelet lifts."""

__version__ = "0.1.0"

from .analysis import InductionMetrics, OffsetResult, Profile, induction_metrics, line_profile, perceived_offset
from .imagegrid import gaussian_blur, load_image, save_image
from .lifting import CakeWaveletStack, build_cake_stack, identity_stack, lift, project
from .stimuli import GratingSpec, PoggendorffSpec, grating_induction, poggendorff
from .wilson_cowan import (
    EvolutionState,
    WCParams,
    WeightKernel,
    build_weight,
    evolve,
    evolve_step,
    interaction_direct,
    interaction_fast,
    run_evolution,
    run_evolution_2d,
)
