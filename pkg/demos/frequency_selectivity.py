"""Why the composite channel fades across subcarriers.

The reflected path is longer than the direct one, so the two add in and out
of phase as the subcarrier frequency changes.  This script prints the gain
of one user over the band as a bar chart, marks the local maxima and checks
their spacing against ``c / (delta_f * delta_d)``.

Run with ``python demos/frequency_selectivity.py``.
"""

import numpy as np

from irsuav.channel import SPEED_OF_LIGHT, fading_period, gain_levels, los_gain_table
from irsuav.scenario import desk_scenario

sc = desk_scenario(n_f=96, n_slots=3, m=32)
users = list(sc.users)
q = np.array([80.0, 330.0, 100.0])
k = 2                                            # the user the IRS serves, right below the UAV

gains = los_gain_table(q[None, :], sc.irs, users, sc.ofdm)[k, k, :, 0]
peak, trough, dc = gain_levels(k, k, q, sc.irs, users, sc.ofdm)
period = fading_period(k, q, sc.irs, users, sc.ofdm.delta_f)
delta_d = SPEED_OF_LIGHT / (sc.ofdm.delta_f * period)

print(f"path difference {delta_d:.1f} m, predicted period {period:.2f} subcarriers")
print(f"peak {10 * np.log10(peak):.2f} dB, dc {10 * np.log10(dc):.2f} dB, "
      f"trough {10 * np.log10(trough):.2f} dB (relative to 1 W/W)\n")

inner = gains[1:-1]
is_peak = np.zeros(gains.size, bool)
is_peak[1:-1] = (inner > gains[:-2]) & (inner >= gains[2:])
scale = 50 / (peak - trough)
for i, g in enumerate(gains, start=1):
    bar = "#" * int(round((g - trough) * scale))
    print(f"{i:3d} {bar}{'  <- peak' if is_peak[i - 1] else ''}")

spacing = np.diff(np.nonzero(is_peak)[0])
print(f"\nmeasured peak spacing {spacing.tolist()} against {period:.2f}")
