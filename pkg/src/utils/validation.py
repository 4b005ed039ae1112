MAX_HOURS = 8784  # one leap year


def valid_hours(hours: float) -> bool:
    return 0 < hours <= MAX_HOURS


def valid_fraction(value: float) -> bool:
    return 0 <= value <= 1


def valid_seed(seed: int) -> bool:
    return 0 <= seed < 2**32
