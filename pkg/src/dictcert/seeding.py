"""Counter-based splittable random streams.

All randomness in the package flows through Philox generators keyed by a
user-visible integer seed plus an explicit derivation path.  Streams are
independent of execution schedule: trial t of a Monte Carlo run draws from
``rng_from(seed, domain, t)`` no matter which worker runs it, so results
are bit-reproducible for any worker count.
"""

import numpy as np

from .errors import ValidationError

# Domain tags keep streams for unrelated purposes disjoint even when the
# per-purpose indices collide.
DOMAIN_DICTIONARY = 101
DOMAIN_COEFFS = 102
DOMAIN_TRIAL = 103
DOMAIN_SOLVER = 104
DOMAIN_LEARNER = 105


def check_seed(seed):
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ValidationError("seeding: seed must be an integer, got %r" % (seed,))
    if seed < 0:
        raise ValidationError("seeding: seed must be nonnegative, got %d" % seed)
    return int(seed)


def rng_from(seed, *path):
    """Return a Generator for the substream addressed by (seed, *path).

    The path entries are hashed together with the seed through SeedSequence,
    whose mixing is documented to be stable across platforms and numpy
    versions, and the result keys a Philox counter-based generator.
    """
    seed = check_seed(seed)
    entropy = (seed,) + tuple(int(x) for x in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
