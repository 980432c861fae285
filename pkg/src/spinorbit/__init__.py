"""spinorbit: exact simulation and Floquet analysis of driven dipolar spin ensembles."""

from .lattice import (
    CouplingScale,
    SpinGraph,
    coupling_scales,
    dipolar_coupling,
    generate_graph,
    normalized_graph,
)
from .operators import (
    SpinOperator,
    StateVector,
    collective_operator,
    dipolar_hamiltonian,
    expectation,
    product_state_x,
    propagate,
)
from .drive import (
    ChirpSpec,
    DriveProtocol,
    HalfPeriodDistorted,
    ProtocolSegment,
    SineWave,
    TrajectoryRecord,
    acquisition_propagator,
    disorder_average,
    run_protocol,
    sl_pulse_unitary,
    window_phase_weight,
)

__version__ = "0.1.0"
