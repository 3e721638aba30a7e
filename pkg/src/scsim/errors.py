"""Exception types shared by the codec, the kernels and the scenario loader."""


class DecodeError(ValueError):
    """Malformed or truncated frame.

    ``offset`` is the byte position (from the start of the Ethernet frame)
    of the element that could not be decoded.
    """

    def __init__(self, offset, reason):
        super().__init__(f"offset {offset}: {reason}")
        self.offset = offset
        self.reason = reason

    def __reduce__(self):
        return (type(self), (self.offset, self.reason))


class EncodeError(ValueError):
    pass


class ScenarioError(ValueError):
    """Scenario failed validation; ``problems`` lists every diagnostic."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
