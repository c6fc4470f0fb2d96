"""Two-party secure inference with single-round polynomial activations.

Layer map, bottom up: `ring` (fixed-point encoding on Z mod 2^64),
`kernels` (modular numerics, compiled when available), `transport`
(paired endpoints and transcripts), `sharing` (shares, dealer, Beaver
machinery), `protocols` (activation evaluation and cost/failure models),
`fitting` (integer coefficient search), `engine` (model format and
secure inference), `cli` (command-line surface).
"""

from .ring import (DEFAULT_CONFIG, FixedPoint, RingConfig, decode,
                   decode_array, encode, encode_array, to_signed,
                   to_unsigned, truncate_raw)
from .transport import (LAN, WAN, NetworkConfig, Transcript,
                        TranscriptSnapshot, TransportError, run_pair)
from .sharing import (BeaverTriples, DealerExhaustedError, PairOutcome,
                      PowerTuples, ProtocolError, Role, Session, Share,
                      TrustedDealer, beaver_multiply, linear_combine,
                      local_truncate, open_value, reconstruct,
                      reconstruct_raw, run_session_pair, share, share_raw)
from .protocols import (CostEstimate, ScalePlan, TruncationFailureBound,
                        espn_exp, espn_poly, failure_bound, hb_poly,
                        hb_powers, predict_cost, relu_binary, sqmul_poly)
from .fitting import (FittingError, PolynomialSpec, fit_lsq, fit_quantized,
                      fitting_grid, max_error)
from .engine import (AvgPool2D, BatchNormAffine, Conv2D, FullyConnected,
                     ModelFormatError, ModelGraph, PolyActivation,
                     load_model, oor_ratio, plain_infer_fixed,
                     plain_infer_real, predict_model_cost, save_model,
                     secure_infer, setup_inference)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CONFIG", "FixedPoint", "RingConfig", "decode", "decode_array",
    "encode", "encode_array", "to_signed", "to_unsigned", "truncate_raw",
    "LAN", "WAN", "NetworkConfig", "Transcript", "TranscriptSnapshot",
    "TransportError", "run_pair",
    "BeaverTriples", "DealerExhaustedError", "PairOutcome", "PowerTuples",
    "ProtocolError", "Role", "Session", "Share", "TrustedDealer",
    "beaver_multiply", "linear_combine", "local_truncate", "open_value",
    "reconstruct", "reconstruct_raw", "run_session_pair", "share",
    "share_raw",
    "CostEstimate", "ScalePlan", "TruncationFailureBound", "espn_exp",
    "espn_poly", "failure_bound", "hb_poly", "hb_powers", "predict_cost",
    "relu_binary", "sqmul_poly",
    "FittingError", "PolynomialSpec", "fit_lsq", "fit_quantized",
    "fitting_grid", "max_error",
    "AvgPool2D", "BatchNormAffine", "Conv2D", "FullyConnected",
    "ModelFormatError", "ModelGraph", "PolyActivation", "load_model",
    "oor_ratio", "plain_infer_fixed", "plain_infer_real",
    "predict_model_cost", "save_model", "secure_infer", "setup_inference",
    "__version__",
]
