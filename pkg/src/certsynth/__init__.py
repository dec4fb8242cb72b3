"""Controller synthesis for switched stochastic linear systems under MTL specifications."""

from .bisim import BisimCertificate, CertificateOptions, optimize_certificate
from .feedback import NominalLibrary, build_library, initial_centers
from .mcsim import Disturbance, SimConfig, run_batch, simulate_sde
from .synth import SynthesisProblem, robust_formula, synthesize, synthesize_iterative
from .sysmodel import InitialBall, Mode, ModeSchedule, SwitchedLinearSystem

__version__ = "0.1.0"

__all__ = [
    "BisimCertificate", "CertificateOptions", "Disturbance", "InitialBall", "Mode",
    "ModeSchedule", "NominalLibrary", "SimConfig", "SwitchedLinearSystem", "SynthesisProblem",
    "build_library", "initial_centers", "optimize_certificate", "robust_formula", "run_batch",
    "simulate_sde", "synthesize", "synthesize_iterative",
]
