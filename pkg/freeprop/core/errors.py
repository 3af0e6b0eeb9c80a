from typing import Optional


class FreepropError(Exception):
    pass


class InvalidArgumentError(FreepropError, ValueError):
    pass


class GradientCheckError(FreepropError):

    def __init__(self, coordinate: tuple, message: str):
        self.coordinate = coordinate
        super().__init__(f'coordinate {coordinate}: {message}')


class DatasetError(FreepropError):

    def __init__(self, scene_id: Optional[str], message: str):
        self.scene_id = scene_id
        prefix = f'scene {scene_id}: ' if scene_id is not None else ''
        super().__init__(f'{prefix}{message}')


class CheckpointError(FreepropError):
    pass


class ConfigError(FreepropError, ValueError):

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f'{field}: {message}')


class NonFiniteLossError(FreepropError):

    def __init__(self, image_id: str, part: str, value: float):
        self.image_id = image_id
        self.part = part
        self.value = value
        super().__init__(f"non-finite loss part '{part}' ({value}) on image {image_id}")
