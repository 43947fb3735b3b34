"""Error-mitigated tomographic circuit cutting."""

from .circuit import (
    Circuit,
    CutPoint,
    CutSpec,
    Fragment,
    apply_cut,
    default_cluster_cuts,
    fragment_circuit_instance,
    gen_cluster_unitary,
    ghz_circuit,
)
from .knit import (
    CutGraph,
    CutReconstruction,
    OutcomeDistribution,
    contract,
    full_distribution,
    mitigate_readout_uncut,
    pauli_expectation,
    trace_distance,
)
from .linalg import ChoiTensor, choi_to_kraus, kraus_to_choi
from .mitigation import (
    DominantEigenvalueTruncation,
    biased_dominant_eigenvalue,
    coherent_mismatch,
    depol_mismatch_bound,
    devt,
    pta_bias_threshold,
)
from .noise import NoiseSpec, clifford_twirl, make_channel, pauli_twirl
from .tomography import (
    ConditionalDataset,
    ConstrainedLeastSquares,
    LinearInversion,
    MEMConstrainedLeastSquares,
    collect_fragment_data,
    dual_basis,
    subsample,
)

__version__ = "0.1.0"
