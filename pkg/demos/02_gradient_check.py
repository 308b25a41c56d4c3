"""Analytic vs finite-difference gradients of each regularizer.

The topological terms are piecewise smooth: away from ties in the MST the
gradient flows through the tree edges only, and central differences agree.
"""
import numpy as np

from persreg import verify
from persreg.regularizers import KINDS, RegularizerSpec
from persreg.sampler import SamplerConfig

gen = np.random.default_rng(3)
params = verify.random_network(gen, (3, 5, 5, 2))
x = gen.normal(size=(3, 12))  # features x batch
sampler = SamplerConfig("full")

for kind in KINDS:
    if kind == "none":
        continue
    spec = RegularizerSpec(kind, 1.0)
    value, analytic = verify.regularizer_grads(params, x, spec, sampler)
    numeric = verify.numerical_grads(lambda p: verify.regularizer_value(p, x, spec, sampler), params)
    ok, worst = verify.gradient_mismatch(analytic, numeric, rtol=1e-4, atol=1e-8)
    print(f"{kind:>2}: value {value:+.5f}  worst error/tolerance {worst:.3g}  {'ok' if ok else 'MISMATCH'}")

print(verify.check_gradients(n_configs=10, seed=1).line())
