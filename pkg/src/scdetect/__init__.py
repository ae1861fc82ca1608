"""Streaming change detection by repeated forward confidence sequences.

Start a new confidence sequence at every step, update all of them with
each observation, and declare a change as soon as the intersection of
the active sequences (and of the known pre-change set, when one is
given) becomes empty.  The package also ships the validation machinery
used to check the scheme's false-alarm and delay guarantees at desk
scale: e-detector oracles, a repeated-sequential-test reconstruction of
the stopping time, and a Monte-Carlo harness.
"""

from .confseq import (
    BettingCs,
    CsConfig,
    HoeffdingCs,
    bet_next,
    cs_interval,
    hoeffding_halfwidth,
    hoeffding_update,
    new_cs,
    update_cs,
    width_envelope,
    z_stat,
)
from .detector import (
    DetectionReport,
    Detector,
    DetectorConfig,
    DetectorTrace,
    global_intersection,
    init_detector,
    run_stream,
)
from .edetector import (
    check_stop_domination,
    e_detector_value,
    e_process_value,
    lorden_tau,
)
from .errors import (
    ConfigError,
    DataDomainError,
    DetectorStateError,
    PreconditionError,
    ScdError,
)
from .intervals import ParamInterval
from .klinf import DiscreteDist, bernoulli_kl, klinf_dual, klinf_two_sided
from .simulate import (
    DataGenModel,
    DistSpec,
    SimConfig,
    SimReport,
    estimate_arl,
    estimate_delay,
    gen_stream,
    k_constants,
    theoretical_delay_bound,
)

__version__ = "0.1.0"
