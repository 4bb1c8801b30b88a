"""Particle-based simulation of the vesicle TX, the diffusive channel and the RX."""

from .geometry import FusionEvent, crossing_fraction, crossing_point, fusion_point, fusion_time
from .simulator import (BitstreamResult, ImpulseResult, RealizationRecord, empirical_fraction,
                        read_records, realization_rng, run_bitstream_experiment,
                        run_impulse_experiment, simulate_fusion_times, simulate_uniform_release,
                        worker_count, write_records)
from .steps import MoleculeState, StepContext, VesicleState, new_vesicle, step_molecule, step_vesicle

__all__ = [
    "BitstreamResult", "FusionEvent", "ImpulseResult", "MoleculeState", "RealizationRecord",
    "StepContext", "VesicleState", "crossing_fraction", "crossing_point", "empirical_fraction",
    "fusion_point", "fusion_time", "new_vesicle", "read_records", "realization_rng",
    "run_bitstream_experiment", "run_impulse_experiment", "simulate_fusion_times",
    "simulate_uniform_release", "step_molecule", "step_vesicle", "worker_count", "write_records",
]
