"""Shared helpers: fixture paths and two-party run shortcuts."""
import json
from pathlib import Path

import numpy as np
import pytest

from polyshare import ring
from polyshare.ring import DEFAULT_CONFIG
from polyshare.sharing import Share, reconstruct_raw, run_session_pair

FIXTURES = Path(__file__).parent / "fixtures"


def split_raw(raw: np.ndarray, seed: int = 0):
    """Both parties' share arrays of the given raw residues."""
    rng = np.random.default_rng(seed)
    mask = rng.integers(0, 1 << 64, size=raw.shape, dtype=np.uint64)
    return mask, raw - mask


def run_symmetric(fn, values: np.ndarray, scale: int | None = None,
                  *, seed: int = 0, mask_seed: int = 0, net=None, raw=None):
    """Encode (or take raw), share, run fn(session, x_share) as both
    parties, and return (decoded_or_raw_output, outcome)."""
    cfg = DEFAULT_CONFIG
    scale = cfg.working_precision if scale is None else scale
    if raw is None:
        raw = ring.encode_array(np.asarray(values, dtype=np.float64),
                                scale, cfg)
    halves = split_raw(raw, mask_seed)

    def party(session):
        x = Share(halves[int(session.role)], session.role, scale)
        return fn(session, x)

    kwargs = {"seed": seed}
    if net is not None:
        kwargs["net"] = net
    outcome = run_session_pair(party, party, **kwargs)
    return outcome


def opened(outcome) -> np.ndarray:
    """Reconstructed raw residues of a Share-valued outcome."""
    return reconstruct_raw(outcome.result_a, outcome.result_b)


def decoded(outcome) -> np.ndarray:
    """Reconstructed and decoded values of a Share-valued outcome."""
    sh = outcome.result_a
    return ring.decode_array(opened(outcome), sh.scale, DEFAULT_CONFIG)


@pytest.fixture(scope="session")
def toycnn_blob() -> bytes:
    return (FIXTURES / "toycnn.pmf").read_bytes()


@pytest.fixture(scope="session")
def toycnn_inputs() -> np.ndarray:
    return np.load(FIXTURES / "toycnn_inputs.npy")


@pytest.fixture(scope="session")
def toycnn_expected() -> dict:
    return json.loads((FIXTURES / "toycnn_expected.json").read_text())
