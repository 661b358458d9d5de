from .errors import ConfigError


class Register:
    def __init__(self, name=''):
        self.registered_classes = {}
        self.name = name

    def __call__(self, class_name):
        def decorator(_class):
            assert class_name not in self.registered_classes, f'{self.name}: {class_name} registered twice.'
            self.registered_classes[class_name] = _class
            _class.registered_name = class_name
            return _class
        return decorator

    @property
    def names(self):
        return sorted(self.registered_classes)

    def get(self, class_name):
        if class_name not in self.registered_classes:
            raise ConfigError(f'unknown {self.name} "{class_name}", choose from {self.names}')
        return self.registered_classes[class_name]
