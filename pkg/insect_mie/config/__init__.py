from insect_mie.config.config import Config, get_setting, setup_logging

__all__ = ['Config', 'get_setting', 'setup_logging']
