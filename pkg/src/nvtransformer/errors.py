"""Exception types the CLI maps onto distinct exit codes."""


class WeightFormatError(ValueError):
    """Weight file is not a valid NVTX container."""


class CorpusError(ValueError):
    """Corpus file or subsample cannot support the requested statistics."""
