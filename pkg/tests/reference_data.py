"""Constants for the bundled 4x4 default scenario.

Duplicated here (not imported from configs/) so tests can compute expected
values with independent arithmetic.
"""

EET_4X4 = [
    [2.238, 1.696, 4.359, 0.736],
    [2.256, 1.828, 4.377, 0.868],
    [2.076, 1.531, 5.096, 0.865],
    [2.092, 1.622, 4.388, 0.913],
]

DYNAMIC_POWERS = [1.6, 3.0, 1.8, 1.5]
IDLE_POWER = 0.05
QUEUE_CAPACITY = 2
ENERGY_BUDGET = 5000.0
