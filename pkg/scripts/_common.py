"""Turn a dataclass into command-line flags, one per field."""

import argparse
import dataclasses
import json
import logging


def parse(config_cls, description: str):
    parser = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(config_cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, bool):
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, default=default)
        elif isinstance(default, (list, tuple)):
            parser.add_argument(flag, nargs="+", type=type(default[0]) if default else str, default=list(default))
        else:
            parser.add_argument(flag, type=_type(f.type, default), default=default)
    args = vars(parser.parse_args())
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    return config_cls(**args)


def _type(annotation, default):
    if default is None or type(None) in getattr(annotation, "__args__", ()):
        return lambda text: None if text.lower() in ("none", "all") else int(float(text))
    return type(default)


def dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=lambda x: getattr(x, "item", lambda: str(x))())
