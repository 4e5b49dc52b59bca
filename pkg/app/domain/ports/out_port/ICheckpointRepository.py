from abc import abstractmethod

from app.domain.entities.checkpoint import Checkpoint
from app.domain.ports.out_port.base_file_repository import IBaseFileRepository


class ICheckpointRepository(IBaseFileRepository):

    @abstractmethod
    def save_checkpoint(self, checkpoint: Checkpoint, path: str) -> str:
        """Writes the checkpoint and returns the resolved path."""
        pass

    @abstractmethod
    def load_checkpoint(self, path: str) -> Checkpoint:
        """
        Reads a checkpoint. Unreadable files, corrupt contents and format
        version mismatches raise distinct CheckpointError types.
        """
        pass
