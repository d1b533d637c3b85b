from fractions import Fraction

from exactmat import Mat, RATIONALS, direct_sum
from freealg import MatTuple, parse_presentation
from approx import defect
from stabilize import NotStabilized, stabilize_findim
from witness import (
    weyl_presentation, weyl_witness, projective_weyl_presentation, folner_data, vacuous_certify,
)

# Square-zero algebra x^2 = 0
square_zero = parse_presentation("""
algebra Q;
gens x;
rels x^2;
""")

# Exact reference: the 2x2 Jordan block
J = Mat.from_rows(RATIONALS, [[0, 1], [0, 0]])
reference = MatTuple(RATIONALS, 2, (J,))

# Three Jordan blocks plus one stray entry
exact = direct_sum(J, J, J)
noisy = MatTuple(RATIONALS, 6, (exact + Mat.unit(RATIONALS, 6, 6, 1, 2),))

report = defect(square_zero, noisy)
print(f"Defect of the noisy tuple: {report.max_defect} (relator ranks {report.ranks})")

try:
    outcome = stabilize_findim(square_zero, 1, reference, noisy, Fraction(1, 2))
    print(f"Repaired at size {outcome.n}, distances {outcome.distances}")
    print(f"dim U = {outcome.diagnostics['dim_U']}, dim W = {outcome.diagnostics['dim_W']}")
except NotStabilized as e:
    print(f"Not stabilized: {e}")
    print(e.diagnostics)

# Weyl algebra: defect 1/n at every size, yet no exact solution exists
weyl = weyl_presentation()
for n in (4, 8, 16):
    print(f"Weyl witness n={n}: defect {defect(weyl, weyl_witness(n)).max_defect}")

# Følner witness for the projective Weyl relations
data = folner_data(6)
print(f"Følner i=6: size {data.n}, defect {defect(projective_weyl_presentation(), data.mats).max_defect}")

# xyz = 1 forces invertibility, so xzy = 0 can only hold approximately
eye = Mat.identity(RATIONALS, 3)
print(f"Vacuous certifier on (I, I, I): {vacuous_certify(MatTuple(RATIONALS, 3, (eye, eye, eye))).value}")
