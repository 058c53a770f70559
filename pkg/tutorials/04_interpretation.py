# Reading the coefficients: odds ratios, ratios of means and a delta-method
# variance for log10(y).
import math

from gelc import BERNOULLI, GAMMA, fit
from gelc.report import coefficient_table, effect_ratio, gamma_log10_variance
from gelc.simulation import Scenario, simulate_dataset

# Logistic model: exp(gamma) is the odds ratio per unit of z.
data, _ = simulate_dataset(Scenario(300, "bernoulli", 0.0, -0.1, censor_mean_width=3.0), 0)
res = fit(data, BERNOULLI)
for row in coefficient_table(res):
    print(f"{row['name']:>6} {row['estimate']:9.4f} ({row['se']:.4f})  odds ratio {row['ratio']:.4f}")

g, se = res.params[-1], res.std_errors[-1]
for delta in (1, 5):
    ratio, lo, hi = effect_ratio(g, se, delta)
    print(f"odds ratio per {delta} unit(s): {ratio:.3f} [{lo:.3f}, {hi:.3f}]")

# Gamma model with a log link: exp(gamma) multiplies the mean.
data, _ = simulate_dataset(Scenario(300, "gamma", 2.0, 0.02, phi=0.3, censor_mean_width=3.0), 0)
res = fit(data, GAMMA)
print()
for row in coefficient_table(res):
    extra = "" if row["ratio"] is None else f"  mean ratio {row['ratio']:.4f}"
    print(f"{row['name']:>6} {row['estimate']:9.4f} ({row['se']:.4f}){extra}")

# Var(y) = phi * mu^2 for the Gamma, so by the delta method
# Var(log10 y) ~ phi / log(10)^2, constant in mu.  This is the scale on
# which a linear model for log10(y) would report its residual variance.
phi = res.theta_hat.phi
print(f"\nVar(log10 y) ~ {gamma_log10_variance(phi):.4f}  (phi = {phi:.4f})")
print(f"residual SD on the log10 scale ~ {math.sqrt(gamma_log10_variance(phi)):.4f}")
