"""
Exception base shared by every tidalfarm module.

Each module defines its own subclasses next to the code that raises them and
sets a module-qualified ``code`` (``mesh.parse``, ``shallow_water.divergence``,
...). The CLI prints that code in its machine-readable error line.
"""


class TidalFarmError(Exception):
    """Raised when a tidalfarm operation fails with a known, describable cause."""

    code = 'tidalfarm.error'

    def __init__(self, message: str, code: str = None):
        super().__init__(message)
        if code:
            self.code = code

    @property
    def message(self) -> str:
        return str(self)
