from lsme.scenes import CategorySplit


def build_split(
    n_base: int = 6, n_low: int = 6, base_inst: int = 4, low_inst: int = 3
) -> CategorySplit:
    base = [f"base{i:02d}" for i in range(n_base)]
    low = [f"low{i:02d}" for i in range(n_low)]
    instances = {c: [f"{c}-obj{j}" for j in range(base_inst)] for c in base}
    instances.update({c: [f"{c}-obj{j}" for j in range(low_inst)] for c in low})
    return CategorySplit(
        base_categories=base,
        lowshot_categories=low,
        instances_per_category=instances,
    )
