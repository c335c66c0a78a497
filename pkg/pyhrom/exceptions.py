class HromError(Exception):
    pass


class HromValidationError(HromError, ValueError):
    pass


class HromDomainError(HromError, ValueError):
    pass


class HromConfigError(HromError, ValueError):
    def __init__(self, message: str, field: str = None):
        super().__init__(message)
        self.field = field


class HromStateError(HromError, RuntimeError):
    pass


class HromOptimizationError(HromError, ArithmeticError):
    def __init__(self, message: str, tensor: str = None, checkpoint: bytes = None):
        super().__init__(message)
        self.tensor = tensor
        self.checkpoint = checkpoint


class HromSimulationError(HromError, ArithmeticError):
    def __init__(self, message: str, step: int = None):
        super().__init__(message)
        self.step = step


class HromFormatError(HromError, ValueError):
    pass
