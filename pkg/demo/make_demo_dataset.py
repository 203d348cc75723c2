from pathlib import Path

from cooc.core.synthgen import generate_cross_domain
from cooc.profiles import get_domain, get_profile
from cooc.util.dataset_io import write_dataset


def main():
    base = Path(__file__).parent

    spec = get_profile("desk").spec(seed=0)
    source, shifted = generate_cross_domain(spec, get_domain("shifted"), test_subjects=10)
    write_dataset(source, base / "desk_source.csv")
    write_dataset(shifted, base / "desk_shifted.csv")

    # only AU01/AU02/AU04 are shared with the desk classes
    narrow = source.restrict_classes(["AU01", "AU02", "AU04"])
    write_dataset(narrow, base / "desk_narrow.csv")


if __name__ == "__main__":
    main()
