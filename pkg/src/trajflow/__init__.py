"""trajflow: learn continuous degradation trajectories between keyframed
latent states with natural-cubic-spline flow matching, and sample unseen
intermediate degradation levels by adaptive ODE integration."""

__version__ = "0.1.0"
