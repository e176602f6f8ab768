"""Freezing-based information transfer for linear Gaussian systems."""
from .directed_info import (
    AverageDirectedInfo,
    DirectedInfoSeries,
    average_directed_information,
    directed_information,
)
from .errors import (
    ConvergenceError,
    DegenerateCovarianceError,
    DimensionError,
    InfoflowError,
    UndefinedTransferError,
    UnstableSystemError,
)
from .gauss import (
    CovarianceState,
    LinearSystem,
    SubspaceSelector,
    TrajectoryCovariance,
    frozen_system,
    gaussian_entropy,
    logdet,
    propagate,
    schur_complement,
    steady_state_covariance,
    trajectory_covariance,
)
from .io_transfer import (
    BodeReport,
    FeedbackLoop,
    bode_integral,
    bode_report,
    close_loop,
    feedback_average_transfer,
    feedback_directed_information,
    feedback_output_input_transfer,
    input_to_output_transfer,
    input_to_state_transfer,
    state_to_output_transfer,
)
from .structural import (
    SystemGraph,
    build_graph,
    check_transfer_path_consistency,
    is_structurally_controllable,
    is_structurally_observable,
    reachable,
)
from .transfer import (
    AverageTransfer,
    TransferQuery,
    TransferSeries,
    average_transfer,
    average_transfer_series,
    cumulative_transfer,
    joint_entropy_difference,
    n_step_transfer,
    one_step_transfer,
    one_step_transfer_xy,
)

__version__ = "0.1.0"
