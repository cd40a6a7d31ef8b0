"""Continuous-variable controlled quantum dialogue simulator.

A deterministic toolkit for a supervised two-party dialogue over two-mode
squeezed light, its ring-topology private-comparison variants, a catalog
of eavesdropping and participant attacks, and the information metrics that
quantify them.
"""

from .channel import ChannelParams, ClassicalMsg, PulseTrain, RunTranscript, TimeFrame, schedule_frames
from .comparison import (
    ComparisonParams,
    ComparisonResult,
    ComparisonVerdict,
    closed_form_statistic,
    run_smp2,
    run_smp_n,
    smp_hardening_key,
)
from .dialogue import (
    CqdResult,
    CqdRun,
    DecodeResult,
    DialogueMessage,
    DisplacementSchedule,
    RunParams,
    charlie_prepare,
    run_dialogue,
)
from .errors import (
    ConfigError,
    InvalidArgumentError,
    InvalidStateError,
    MetricDomainError,
    ProtocolOrderError,
    SimulationError,
)
from .metrics import (
    CapacityParams,
    MiParams,
    dense_coding_capacity,
    detection_probability,
    empirical_mi,
    mutual_information_ab,
    switch_curve,
    wilson_interval,
)
from .phasespace import (
    BellOutcome,
    GaussianState,
    Quad,
    ShotState,
    SymplecticOp,
    amplify,
    beam_split,
    bell_measure,
    displace,
    homodyne,
    loss_channel,
    make_vacuum,
    sample_shot,
    two_mode_squeeze,
)

__version__ = "0.1.0"
