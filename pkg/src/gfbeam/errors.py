"""Exception type shared by all modules."""


class GfBeamError(ValueError):
    """Raised for invalid input or inconsistent data.

    Every error carries a short machine-readable ``code`` (e.g.
    ``"COINCIDENT"``, ``"FREQ_MISMATCH"``) next to the human message, so
    callers and the command line front end can react to the kind of failure
    without parsing text.
    """

    def __init__(self, code, message, context=None):
        self.code = code
        self.context = dict(context or {})
        super().__init__(f"{code}: {message}")
