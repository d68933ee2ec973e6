"""
Prometheus metrics for catamp runs.
"""
from prometheus_client import Counter, Histogram, REGISTRY, generate_latest

# Integrations, by state representation and outcome
INTEGRATIONS_TOTAL = Counter(
    'catamp_integrations_total', 'Total time integrations grouped by outcome', ['kind', 'outcome']
)

# Right-hand-side evaluations (the hot loop)
RHS_EVALUATIONS_TOTAL = Counter(
    'catamp_rhs_evaluations_total', 'Right-hand-side evaluations', ['kind']
)

INTEGRATION_SECONDS = Histogram(
    'catamp_integration_seconds', 'Wall time of one integration', ['kind'],
    buckets=(0.1, 1.0, 10.0, 60.0, 300.0, 1200.0, 3600.0),
)

# CLI scenarios
SCENARIOS_TOTAL = Counter(
    'catamp_scenarios_total', 'Scenario runs grouped by mode and exit status', ['mode', 'status']
)


def exposition() -> bytes:
    """Text exposition of the default registry, written next to each run manifest."""
    return generate_latest(REGISTRY)

# Tone2 calibrations, by whether every manifold reached the target efficiency
CALIBRATIONS_TOTAL = Counter(
    'catamp_calibrations_total', 'Transfer-schedule calibrations grouped by outcome', ['outcome']
)
