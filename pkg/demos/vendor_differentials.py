"""Look for permission files on which an emulated vendor defect changes a decision."""
from pathlib import Path

from ddsrecon.pdp import PdpVariant, differential_witness
from ddsrecon.permissions import parse_permissions

CORPUS = Path(__file__).resolve().parent.parent / "tests" / "data" / "vendor"


def main():
    files = sorted(CORPUS.glob("*.xml"))
    for variant in (PdpVariant.SWAPPED_FNMATCH_ARGS, PdpVariant.SKIP_PARTITION_CHECK):
        print(f"== {variant.value}")
        for f in files[:6]:
            w = differential_witness(parse_permissions(f.read_bytes()), variant)
            if w is None:
                print(f"  {f.stem:<14} no divergence")
                continue
            a = w.action
            print(f"  {f.stem:<14} {a.verb.value:<9} topic={a.topic!r:<16} "
                  f"partition={a.partition!r:<10} compliant={w.compliant.value} "
                  f"variant={w.variant_outcome.value}")


if __name__ == "__main__":
    main()
