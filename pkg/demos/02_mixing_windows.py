"""
Mixing windows
==============

Iterate a level of one tower and check it meets every level of another
tower at each time in a window.  Rotations fail the same test.
"""

from fractions import Fraction

from keane_mixer import Iet, IntervalSet, KeaneSystem, lemma3_check, mixing_window_check, search
from keane_mixer.harness import stitched_window_check

system = KeaneSystem(search(4), 4)
c0, d0 = system.table.window(0)

# a level of O(I_3^(2)) against all 17 levels of O(I_2^(1)); the full
# window [c0, d0] takes a few minutes, here only its first 5000 times
J = system.level(2, 3)
targets = [IntervalSet.interval(*iv) for iv in system.towers.levels(1, 2)]
res = stitched_window_check(system.TI, J, targets, c0, c0 + 5000, spot_checks=20,
                            jumper=system.jumper)
print(res.summary()["misses"], "misses; peak pieces", res.peak_pieces)

# the next window: exhaustive for 2000 steps, then sampled by tower witnesses
rep = lemma3_check(system, exhaustive_span=2000, stride=10_000)
for seg in rep.segments:
    s = seg.summary()
    print(s["mode"], s["window"], "checked", s["checked"], "misses", s["misses"], s["notes"])

# a rotation by 1/2 misses every other time
U = IntervalSet.interval(Fraction(0), Fraction(1, 4))
rot = mixing_window_check(Iet.rotation(Fraction(1, 2)), U, U, 0, 9)
print("rotation hits:", rot.hits)
