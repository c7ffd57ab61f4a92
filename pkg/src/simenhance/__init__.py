"""Neural enhancement of coarse telemetry simulations."""
