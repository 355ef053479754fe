"""Long-time behaviour in the subcritical, supercritical and growing-stream cases.

Each block runs one of the built-in experiments at a reduced size and prints
its verdict; the full-size versions are the presets listed by
``branchimm list``.
"""
from branchimm import kernels as kern
from branchimm.experiments import (experiment_l2_rates, experiment_rescaled_limit,
                                   experiment_subcritical_limit, subcritical_limit_transform)
from branchimm.model import build_generator, single_type

sub = single_type(1.0, [(0, 0.75), (2, 0.25)])
sup = single_type(1.0, [(0, 0.25), (2, 0.75)])
grow = single_type(1.0, [(0, 0.35), (2, 0.65)])

print("Stationary limit under stationary immigration")
gen = build_generator(sub)
for kernel in (kern.PoissonIdentity(1.0), kern.GinibreGaussian(1.0)):
    lim = subcritical_limit_transform(sub, gen, kernel, [1.0])
    print(f"  {type(kernel).__name__:<16} E exp(-Z) -> {lim.value:.6f}"
          f" ({len(lim.partial_sums) - 1} series terms)")
v = experiment_subcritical_limit(sub, gen, kern.PoissonIdentity(1.0), n_rep=2000, seed=5)
print("  " + v.summary())

print("\nSupercritical: Z(t) e^(-rho t) converges in law")
gen = build_generator(sup)
v = experiment_rescaled_limit(sup, gen, kern.PoissonIdentity(1.0), n_rep=1500, seed=7)
print("  " + v.summary())

print("\nGrowing immigration intensity e^(delta t)")
growing = kern.PoissonIdentity(kern.ExponentialDensity(1.0, 0.2))
v = experiment_l2_rates(sub, build_generator(sub), growing, "delta_dominant",
                        [5.0, 10.0, 20.0], n_rep=1000, seed=11)
print("  delta > max(rho, 0): " + v.summary())
v = experiment_l2_rates(grow, build_generator(grow), kern.PoissonIdentity(kern.ExponentialDensity(1.0, 0.3)),
                        "delta_equals_rho_super", [5.0, 10.0, 20.0], n_rep=1000, seed=13)
print("  delta = rho > 0:     " + v.summary())
