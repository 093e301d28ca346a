"""
Geometry gate
=============

The theory needs D to be Ahlfors-David regular and both D and N to contain
a boundary interval of size R0/M.  Run both checks on every bundled domain.
"""
# %%
from mixedgreen.cli import read_domain, shipped_domains
from mixedgreen.geometry import GeometryError, ahlfors_david_check, opening_check

for name in shipped_domains():
    _, _, dom, dec = read_domain(name)
    try:
        ad = "ok" if ahlfors_david_check(dom, dec)["pass"] else "fails"
    except GeometryError as exc:
        ad = f"fails ({exc})"
    oc = opening_check(dom, dec)
    print(f"{name:24s} Ahlfors-David {ad:28s} DOpen {oc['D_open']!s:5s} NOpen {oc['N_open']}")
