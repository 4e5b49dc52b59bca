import os
from abc import ABC


class IBaseFileRepository(ABC):
    """
    Base for repositories that persist artifacts as files under one root
    directory. Relative names resolve against the root; absolute paths are
    used as given.
    """

    def __init__(self, root_dir: str):
        self.root_dir = root_dir

    def resolve(self, name: str) -> str:
        return name if os.path.isabs(name) else os.path.join(self.root_dir, name)

    def ensure_parent(self, path: str) -> str:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        return path
