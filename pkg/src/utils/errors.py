__all__ = [
    'ReconError',
    'DimensionMismatchError',
    'InvalidInputError',
    'DegenerateConfigurationError',
    'MalformedSequenceError',
    'ConfigError',
    'EmptyVolumeError',
    'MissingGroundTruthError',
    'InvalidSpecError',
    ]


class ReconError(ValueError):
    """
    Base error of the reconstruction backend.
    `category` is the machine-parseable token printed by the entry portals:
        error: <category>: <message>
    """
    category = 'error'

    def one_line(self):
        message = ' '.join(str(self).split())
        return f'error: {self.category}: {message}'


class DimensionMismatchError(ReconError):
    category = 'dimension_mismatch'


class InvalidInputError(ReconError):
    category = 'invalid_input'


class DegenerateConfigurationError(ReconError):
    category = 'degenerate'


class MalformedSequenceError(ReconError):
    category = 'malformed_sequence'

    def __init__(self, path, reason=''):
        self.path = str(path)
        super().__init__(f'{self.path}: {reason}' if reason else self.path)


class ConfigError(ReconError):
    category = 'config'


class EmptyVolumeError(ReconError):
    category = 'empty_volume'


class MissingGroundTruthError(ReconError):
    category = 'missing_ground_truth'


class InvalidSpecError(ReconError):
    category = 'invalid_spec'
