"""Simulation of holonomic multiqubit entangling gates on Ising-coupled atoms.

Subpackages:

* ``hilbert``   tensor-product states, operators and structured
                time-dependent Hamiltonians
* ``model``     level schemes, ring geometry, couplings and all Hamiltonian
                builders (full, effective, collective-basis, four-level)
* ``pulse``     rectangular and shaped loop waveforms, sensitivity functional
* ``dynamics``  adaptive RK4 Schroedinger/Lindblad propagation, error model
* ``metrics``   fidelities, excitation populations, average gate fidelity
* ``scenarios`` declarative study runner producing CSV tables
* ``cli``       command-line entry point (``hologate``)
"""

__version__ = "0.1.0"

from .hilbert import (  # noqa: F401
    DensityMatrix,
    DimensionError,
    Operator,
    SiteDims,
    StateVector,
    TimeDependentOperator,
    embed_pair_operator,
    embed_site_operator,
    excitation_number_projector,
    expectation,
    tensor_product,
)
from .model import (  # noqa: F401
    AtomGeometry,
    DriveSpec,
    GateSpec,
    InteractionGraph,
    LevelScheme,
    Placement,
    SystemModel,
    TwoPhotonParams,
    build_effective_hamiltonian,
    build_full_hamiltonian,
    build_geometry,
    build_interactions,
    build_two_photon_hamiltonian,
    dressed_basis_unitary,
    ideal_gate_unitary,
    make_gate_model,
)
from .pulse import (  # noqa: F401
    OhqcParams,
    PhaseSchedule,
    PulseSampleTable,
    dynamical_phase,
    nhqc_waveform,
    ohqc_waveform,
    pulse_area_product,
    scan_landscape,
    sensitivity,
    waveform_consistency_check,
)
from .dynamics import (  # noqa: F401
    IntegratorSettings,
    LindbladChannel,
    NoiseRealization,
    NoiseSpec,
    apply_noise,
    evolve_lindblad,
    evolve_schrodinger,
    sample_noise,
    spin_echo_transform,
)
from .metrics import (  # noqa: F401
    FidelityCurve,
    PauliString,
    average_gate_fidelity,
    benchmark_initial_state,
    excitation_populations,
    overlap_fidelity,
    truth_table_check,
)
from .scenarios import (  # noqa: F401
    SCENARIOS,
    ConfigError,
    ResultTable,
    ScenarioConfig,
    run_scenario,
    validate_config,
)
