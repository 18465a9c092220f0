import functools


class AppError(Exception):
    """Base exception class for application errors."""
    
    def __init__(self, message, details=None):
        """
        Initialize the exception.
        
        Args:
            message: Error message
            details: Optional details about the error
        """
        self.message = message
        self.details = details
        super().__init__(self.message)
    
    def __str__(self):
        """String representation of the error."""
        if self.details:
            return f"{self.message} - {self.details}"
        return self.message

class DomainError(AppError):
    """Exception raised when a physical quantity is outside its valid domain."""
    pass

class ContractViolation(AppError):
    """Exception raised when an operation is called in a state that forbids it."""
    pass

class InsufficientDataError(AppError):
    """Exception raised when there is not enough data for an operation."""
    pass

class ConfigurationError(AppError):
    """Exception raised for errors in run configuration."""
    
    def __init__(self, message, key_path=None, details=None):
        self.key_path = key_path
        if key_path:
            message = f"{message} at '{key_path}'"
        super().__init__(message, details)

class CheckpointError(AppError):
    """Exception raised for unreadable, corrupt or incompatible checkpoints."""
    pass

class ExportError(AppError):
    """Exception raised for failures writing or reading exported data."""
    pass

def format_exception(exception):
    """
    Format an exception into a user-friendly message.
    
    Args:
        exception: The exception object
        
    Returns:
        User-friendly error message
    """
    if isinstance(exception, AppError):
        return str(exception)
    
    if isinstance(exception, FileNotFoundError):
        return f"File not found: {exception.filename}"
    
    if isinstance(exception, PermissionError):
        return f"Permission denied: {exception.filename}"
    
    return f"An error occurred: {str(exception)}"

def handle_exception(exception, logger):
    """
    Handle and log an exception.
    
    Args:
        exception: The exception object
        logger: Logger instance for logging the error
        
    Returns:
        User-friendly error message
    """
    if isinstance(exception, AppError):
        logger.error(f"{exception.__class__.__name__}: {str(exception)}")
    else:
        logger.exception("Unhandled exception")
    
    return format_exception(exception)

def wrap_export_errors(func):
    """
    Decorator to wrap I/O failures during export in ExportError.
    
    The first positional argument named ``path`` (or keyword ``path``) is
    reported as context.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ExportError:
            raise
        except (OSError, ValueError) as e:
            path = kwargs.get('path', getattr(e, 'filename', None))
            raise ExportError(f"Export failed for {path}", str(e))
    return wrapper

def wrap_checkpoint_errors(func):
    """
    Decorator to wrap checkpoint read failures in CheckpointError.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CheckpointError:
            raise
        except Exception as e:
            raise CheckpointError("Checkpoint could not be loaded", str(e))
    return wrapper
