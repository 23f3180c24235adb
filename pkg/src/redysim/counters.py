"""Mergeable event counters for crossbar, ADC and precision-unit activity."""
from dataclasses import dataclass, field

FIELDS = ("crossbar_activations", "adc_conversions", "streamed_bits",
          "histogram_samples", "group_decisions")


def _zero():
    return dict.fromkeys(FIELDS, 0)


@dataclass
class ActivityCounters:
    """Totals plus a per-layer breakdown.

    One crossbar activation is one bit plane applied to one physical array;
    every activation senses all bitlines of the array, one A/D conversion each.
    """

    per_layer: dict = field(default_factory=dict)

    def add(self, layer, **counts):
        row = self.per_layer.setdefault(layer, _zero())
        for name, value in counts.items():
            if value < 0:
                raise ValueError(f"negative increment for {name}")
            row[name] += int(value)

    def total(self, name):
        return sum(row[name] for row in self.per_layer.values())

    @property
    def crossbar_activations(self):
        return self.total("crossbar_activations")

    @property
    def adc_conversions(self):
        return self.total("adc_conversions")

    @property
    def streamed_bits(self):
        return self.total("streamed_bits")

    @property
    def histogram_samples(self):
        return self.total("histogram_samples")

    @property
    def group_decisions(self):
        return self.total("group_decisions")

    def merge(self, other):
        out = ActivityCounters()
        for src in (self, other):
            for layer, row in src.per_layer.items():
                out.add(layer, **row)
        return out

    __add__ = merge

    def as_dict(self):
        return {
            "total": {name: self.total(name) for name in FIELDS},
            "per_layer": {str(k): dict(self.per_layer[k]) for k in sorted(self.per_layer)},
        }
