"""
No mixing of all orders
=======================

Induce on V = I^(2), then on each piece U_i of the induced map.  The
images T^(r_ij)(J) all meet in a set inside J, so a disjoint J' is
never reached simultaneously.
"""

from fractions import Fraction

from keane_mixer import Iet, IntervalSet, KeaneSystem, obstruction_check, search

system = KeaneSystem(search(4), 4)
J, Jp = system.level(2, 2), system.level(2, 3)
res = obstruction_check(system.TI, 1, [100], J, Jp, V=system.towers.base(2), chain=system.chain)
for i, row in enumerate(res.return_times, start=1):
    print(f"U_{i}: r =", row)
print("intersection inside J:", res.contained, "| misses J':", res.disjoint, "| verdict:", res.verdict)

# the same mechanism for the rotation by 1/2: everything returns at time 2
half = Iet.rotation(Fraction(1, 2))
res = obstruction_check(half, 1, [1], IntervalSet.interval(Fraction(0), Fraction(1, 4)),
                        IntervalSet.interval(Fraction(1, 2), Fraction(3, 4)))
print("rotation:", res.return_times, res.to_json()["exact_intersection"])
