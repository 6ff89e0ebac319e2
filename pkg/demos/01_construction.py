"""
Building the mixing exchange
============================

Choose the stage parameters, build the truncated 4-IET, and watch the
induction on the fourth interval reproduce the landing matrices.
"""

from keane_mixer import KeaneSystem, check_conditions, matrix_A, return_table, search

# four stages chosen so that conditions 1-5 hold at every level
params = search(4)
for k, (m, n) in enumerate(params.stages):
    print(f"stage {k}: m = {m}, n = {n}")
print("conditions pass:", check_conditions(params).passed)

# return times b[k] and the windows [c_k, d_k]
tab = return_table(params)
for k, row in enumerate(tab.b):
    print(f"b[{k}] =", row)
for k in range(len(tab.c)):
    print(f"window {k}: [{tab.c[k]}, {tab.d[k]}]")

# the depth-4 truncation, rescaled to integer coordinates
system = KeaneSystem(params, 4)
print("lengths:", [str(x) for x in system.T.lengths])
print("scale:", system.scale, f"({system.scale.bit_length()} bits)")

# each induced map visits the previous level exactly as A_(m_k, n_k) says
for k, ind in enumerate(system.chain):
    same = ind.visitation() == matrix_A(*params.stages[k])
    print(f"level {k + 1}: permutation {ind.permutation}, heights {ind.return_time_vector()}, "
          f"matrix matches: {same}")
