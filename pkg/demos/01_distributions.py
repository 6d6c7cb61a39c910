"""
Exact demand and lead-time calculus
===================================

Every quantity the benchmark heuristic reasons about -- demand per
period, shipment lead times, demand accumulated over a random lead time
-- is a probability mass function over non-negative integers.  This
walkthrough builds a few, combines them, and checks the results against
closed-form identities.
"""

import numpy as np

from meiolab import pmf as pm

# A Poisson demand law, truncated where the tail mass drops below 1e-12.
demand = pm.make_poisson(10.0)
print(f"Poisson(10): mean={demand.mean:.4f}, var={demand.variance:.4f}")

# Convolution gives the distribution of two independent periods of
# demand.  Poisson is closed under convolution, so this should be
# Poisson(20) exactly.
two_periods = pm.convolve(demand, demand)
print(f"two periods: mean={two_periods.mean:.4f} "
      f"(matches Poisson(20): {two_periods.allclose(pm.make_poisson(20.0))})")

# The named scenarios use a uniform mixture of Poisson means 5..15 --
# heavier-tailed than any single Poisson with the same mean.
mixed = pm.make_uniform_poisson_mixture(5, 15)
print(f"Poisson-uniform(5,15): mean={mixed.mean:.2f}, var={mixed.variance:.2f} "
      f"(a Poisson would have var == mean)")

# Lead-time demand: total demand over a random number of periods.  The
# law of total expectation says its mean is E[D] * E[L].
lead = pm.Pmf(1, [0.5, 0.3, 0.2])          # 1, 2, or 3 periods
ltd = pm.compound_lead_time_demand(mixed, lead)
print(f"lead-time demand: mean={ltd.mean:.4f} "
      f"== {mixed.mean:.2f} * {lead.mean:.2f} = {mixed.mean * lead.mean:.4f}")

# Quantiles and expected shortfall drive base-stock levels: the level
# covering 95% of lead-time demand, and the expected backorders there.
s = ltd.quantile(0.95)
print(f"95% fractile of lead-time demand: {s}; "
      f"expected shortfall E[(X - {s})^+] = {ltd.expected_shortfall(s):.4f}")

# A customer that splits its order stream uniformly over two suppliers
# thins the stream each supplier sees: same order sizes, half as often.
thinned = pm.thin_random_routing(mixed, 2)
print(f"thinned stream: mean={thinned.mean:.2f} (half of {mixed.mean:.2f}); "
      f"P(0) grew from {mixed.pmf(0):.4f} to {thinned.pmf(0):.4f}")

# Everything is exact: sampling from the PMF reproduces its moments.
rng = np.random.default_rng(0)
draws = ltd.sample(rng, 200_000)
print(f"Monte Carlo check: sample mean {draws.mean():.3f} vs exact {ltd.mean:.3f}")
