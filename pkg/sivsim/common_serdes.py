# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

from dataclasses import field
from pathlib import Path
from typing import (
    Any,
    Callable,
    ClassVar,
    Dict,
    Iterator,
    List,
    Mapping,
    Tuple,
    Type,
    TypeVar,
    Union,
    cast,
)

import marshmallow
import marshmallow_dataclass
import yaml
from typing_extensions import Self

from sivsim.util import (
    MISSING,
    Dimension,
    MaybeMissing,
    parse_quantity,
    recursive_defaultdict,
    recursive_defaultdict_to_dict,
)


class QuantityField(marshmallow.fields.Field):
    """
    Marshmallow field representing a physical quantity.
    Accepts plain numbers (already in base units) or strings with an SI-prefixed unit,
    e.g. "47 GHz", "2.4 ms", "4.5 kG", and always deserializes to a float in base units.
    """

    def __init__(self, *args: Any, dimension: Dimension = Dimension.DIMENSIONLESS, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.dimension = dimension

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        return float(value)

    def _deserialize(self, value, attr, data, **kwargs):
        try:
            return parse_quantity(value, self.dimension)
        except (TypeError, ValueError) as e:
            raise marshmallow.ValidationError(f"Invalid {self.dimension.value}: {e}")


class QuantityListField(QuantityField):
    """
    A list of quantities of the same dimension. Besides a regular list this also
    accepts a single comma-separated string, e.g. "1 ms, 2 ms, 4 ms".
    """

    def _serialize(self, value, attr, obj, **kwargs):
        if value is None:
            return None
        return [float(v) for v in value]

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise marshmallow.ValidationError("Not a list of quantities")
        return [super(QuantityListField, self)._deserialize(v, attr, data) for v in value]


class StringListField(marshmallow.fields.Field):
    """A list of strings, also accepted as a single comma-separated string"""

    def _serialize(self, value, attr, obj, **kwargs):
        return None if value is None else list(value)

    def _deserialize(self, value, attr, data, **kwargs):
        if isinstance(value, str):
            return [v.strip() for v in value.split(",") if v.strip()]
        if isinstance(value, (list, tuple)):
            return [str(v) for v in value]
        raise marshmallow.ValidationError("Not a list of strings")


def _quantity(name: str, dimension: Dimension, list_of: bool = False) -> Any:
    return marshmallow_dataclass.NewType(
        name,
        list if list_of else float,
        field=QuantityListField if list_of else QuantityField,
        dimension=dimension,
    )


Frequency = _quantity("Frequency", Dimension.FREQUENCY)
Time = _quantity("Time", Dimension.TIME)
Temperature = _quantity("Temperature", Dimension.TEMPERATURE)
FieldStrength = _quantity("FieldStrength", Dimension.FIELD)
Angle = _quantity("Angle", Dimension.ANGLE)
Decibel = _quantity("Decibel", Dimension.DECIBEL)
Ratio = _quantity("Ratio", Dimension.DIMENSIONLESS)
FrequencyList = _quantity("FrequencyList", Dimension.FREQUENCY, list_of=True)
TimeList = _quantity("TimeList", Dimension.TIME, list_of=True)
StringList = marshmallow_dataclass.NewType("StringList", list, field=StringListField)


T = TypeVar("T")


def flatten_dotted(tree: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Flattens a nested dictionary into a single level one with dotted keys.
    `None` leaves are skipped.

    Example::

        flatten_dotted({
            "scenario": "spectrum",
            "field": {"magnitude": 4500.0, "polar_angle": 0.0},
        }) == {
            "scenario": "spectrum",
            "field.magnitude": 4500.0,
            "field.polar_angle": 0.0,
        }
    """

    def flatten(t: Mapping[str, Any]) -> Iterator[Tuple[str, Any]]:
        for k, v in t.items():
            if isinstance(v, dict):
                for sub_key, sub_value in flatten(v):
                    yield (f"{k}.{sub_key}", sub_value)
            elif v is not None:
                yield (k, v)

    return dict(flatten(tree))


def unflatten_dotted(flat: Mapping[str, Any]) -> Dict[str, Any]:
    """
    Inverse of `flatten_dotted`. Raises ValueError when a key is used both as
    a leaf and as a section, e.g. "field = 1" together with "field.magnitude = 2".
    """

    tree = recursive_defaultdict()
    for key, value in flat.items():
        *sections, leaf = key.split(".")
        node = tree
        for section in sections:
            if section in node and not isinstance(node[section], dict):
                raise ValueError(f"'{section}' is used both as a value and as a section")
            node = node[section]
        if leaf in node:
            raise ValueError(f"'{key}' is used both as a value and as a section")
        node[leaf] = value
    return recursive_defaultdict_to_dict(tree)


def schema_keys(schema: marshmallow.Schema, prefix: str = "") -> List[str]:
    """Lists dotted keys of every leaf field reachable from the given schema"""

    keys = []
    for fname, fld in schema.fields.items():
        name = prefix + (fld.data_key or fname)
        if isinstance(fld, marshmallow.fields.Nested):
            nested = fld.schema
            keys.extend(schema_keys(nested, name + "."))
        else:
            keys.append(name)
    return keys


def ext_field(
    default: MaybeMissing[Union[T, Callable[[], T]]] = MISSING,
    *,
    dcls_field_kws: Mapping[str, Any] = {},
    **kwargs: Any,
) -> T:
    """
    A shorthand wrapper for a marshmallow_dataclass field.
    Useful for specifying a field that should be optional and have a default value
    without being very verbose.

    Examples:
    - Specifying optional fields with default values::

        temperature: Temperature = ext_field(4.5)
        taus: TimeList = ext_field(list)

    - Passing additional parameters to the `marshmallow.Field` class
      is done through additional kwargs::

        scenario: Scenario = ext_field(Scenario.SPECTRUM, by_value=True)

    - Passing additional parameters to the `dataclass.field` function
      is done through the `dcls_field_kws` parameter::

        scheme: LevelScheme = ext_field(dcls_field_kws={"repr": False})

    :param default: Either a zero-argument callable that initializes and returns a default value
        for this field or a plain default value. The presence of this parameter defines whether this
        field is optional in the generated schema or not.

    :param dcls_field_kws: Additional keyword params to be passed to the `dataclasses.field`
        function.

    :param **kwargs: Additional keyword params that get passed to the `marshmallow.Field`
        constructor.
    """

    if default is MISSING:
        return field(metadata=kwargs, **dcls_field_kws)

    opt_dcls_meta = {"load_default": default, "required": False, **kwargs}

    if isinstance(default, Callable):
        return field(default_factory=default, metadata=opt_dcls_meta, **dcls_field_kws)

    return field(default=cast(T, default), metadata=opt_dcls_meta, **dcls_field_kws)


class MarshmallowDataclassExtensions:
    """
    This base class implements some common methods often used throughout the codebase.
    The correct usage is to inherit from this class in your dataclass.
    """

    Schema: ClassVar[Type[marshmallow.Schema]]

    @marshmallow.post_dump
    def _post_dump_handler(self, data: Dict[str, Any], **kw: Any):
        return {k: v for k, v in data.items() if v is not None}

    def to_dict(self, **kwargs: Any) -> Dict[str, Any]:
        return cast(Dict[str, Any], self.Schema().dump(self, **kwargs))

    @classmethod
    def from_dict(cls, data: Dict[str, Any], **kwargs: Any) -> Self:
        return cast(Self, cls.Schema().load(data, **kwargs))

    def to_yaml(self, **kwargs: Any) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_yaml(cls, yaml_str: str, **kwargs: Any) -> Self:
        return cls.from_dict(yaml.safe_load(yaml_str, **kwargs))

    def save(self, path: Union[str, Path], **kwargs: Any):
        with open(path, "w") as f:
            f.write(self.to_yaml(**kwargs))

    @classmethod
    def load(cls, path: Union[str, Path], **kwargs: Any) -> Self:
        with open(path) as f:
            return cls.from_dict(yaml.safe_load(f, **kwargs))
