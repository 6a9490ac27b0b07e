"""Local optimality certification for l1-based dictionary learning."""

from .errors import (
    ConditioningError,
    DictcertError,
    NumericalError,
    SingularGramError,
    ValidationError,
)
from .linalg import (
    Dictionary,
    GramSubsetReport,
    atom_inner,
    atom_perp_project,
    atom_scale,
    gram_subset_report,
    mutual_coherence,
)
from .model import (
    Instance,
    RegularityReport,
    SparseCoeffs,
    SupportPattern,
    coeffs_from_dense,
    gen_coefficients,
    gen_dictionary,
    gen_instance,
    load_instance,
    observe,
    save_instance,
    support_regularity,
)
from .certificate import (
    CertificateCheck,
    CertificateState,
    PassResult,
    build_certificate,
    deflation_direction,
    golfing_pass,
    least_squares_cert,
    max_passes,
    verify_certificate,
)

__version__ = "0.1.0"
