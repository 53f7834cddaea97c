from fractions import Fraction

from hypothesis import strategies as st

from bornsim.hilbert import OutcomeSpec, ReplicaSpec


@st.composite
def rational_probs(draw, m=None, min_m=2, max_m=5, max_weight=12):
    """Exact probability vectors with small denominators (zeros allowed)."""
    if m is None:
        m = draw(st.integers(min_m, max_m))
    weights = draw(st.lists(st.integers(0, max_weight), min_size=m, max_size=m).filter(any))
    total = sum(weights)
    return tuple(Fraction(w, total) for w in weights)


@st.composite
def replica_specs(draw, max_m=5, max_n=50, min_m=2):
    probs = draw(rational_probs(min_m=min_m, max_m=max_m))
    n = draw(st.integers(1, max_n))
    return ReplicaSpec(OutcomeSpec.from_probs(probs), n)
