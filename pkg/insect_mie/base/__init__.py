from insect_mie.base.base_stage import BaseStage

__all__ = ['BaseStage']
