from django import forms

from .engine.model import INITIAL_PHASE_MODES, PAIR_NOISE_MODES, TOPOLOGIES

SPECTRUM_WINDOWS = ('hann', 'rectangular')
MAX_SEED = 2**64 - 1


def _choices(values):
    return [(value, value) for value in values]


class RateField(forms.FloatField):
    """FloatField that optionally lets +inf through (e.g. nearest-neighbour coupling)"""

    def __init__(self, *args, allow_infinite=False, **kwargs):
        self.allow_infinite = allow_infinite
        super().__init__(*args, **kwargs)

    def validate(self, value):
        if self.allow_infinite and value == float('inf'):
            return
        super().validate(value)


class ListField(forms.Field):
    """Accepts a YAML list or a comma-separated string"""

    item_field = forms.FloatField

    def __init__(self, *args, min_value=None, **kwargs):
        self.item = self.item_field(min_value=min_value)
        super().__init__(*args, **kwargs)

    def to_python(self, value):
        if value in self.empty_values:
            return []
        if isinstance(value, str):
            value = [part for part in value.split(',') if part.strip()]
        elif not isinstance(value, (list, tuple)):
            value = [value]
        cleaned = []
        for position, item in enumerate(value):
            try:
                cleaned.append(self.item.clean(item))
            except forms.ValidationError as error:
                raise forms.ValidationError(
                    f"item {position}: {'; '.join(error.messages)}", code='invalid_item'
                )
        return cleaned


class IntegerListField(ListField):
    item_field = forms.IntegerField


# Oscillator rates
class OscillatorForm(forms.Form):
    omega = forms.FloatField(label='Frequency')
    kappa1 = forms.FloatField(min_value=0.0, label='Linear gain')
    kappa2 = forms.FloatField(min_value=0.0, label='Two-quantum loss')
    drive_re = forms.FloatField(label='Drive (real part)')
    drive_im = forms.FloatField(label='Drive (imaginary part)')

    def clean_kappa2(self):
        kappa2 = self.cleaned_data['kappa2']
        if kappa2 <= 0:
            raise forms.ValidationError('a limit cycle needs kappa2 > 0')
        return kappa2


# Dissipative coupling between oscillators
class CouplingForm(forms.Form):
    mu = forms.FloatField(min_value=0.0, label='Coupling strength')
    gamma = RateField(min_value=0.0, allow_infinite=True, label='Range attenuation')
    topology = forms.ChoiceField(choices=_choices(TOPOLOGIES))


# Langevin ensemble integration
class EnsembleForm(forms.Form):
    n_traj = forms.IntegerField(min_value=1, label='Trajectories')
    dt = forms.FloatField(label='Time step')
    t_final = forms.FloatField(min_value=0.0, required=False, label='Final time')
    seed = forms.IntegerField(min_value=0, max_value=MAX_SEED)
    record_stride = forms.IntegerField(min_value=1)
    block_size = forms.IntegerField(min_value=1)
    pair_noise = forms.ChoiceField(choices=_choices(PAIR_NOISE_MODES))
    noise_scale = forms.FloatField(min_value=0.0)
    initial_phase = forms.ChoiceField(choices=_choices(INITIAL_PHASE_MODES))
    snapshot_times = ListField(min_value=0.0, required=False)

    def clean_dt(self):
        dt = self.cleaned_data['dt']
        if dt <= 0:
            raise forms.ValidationError('dt must be > 0')
        return dt

    def clean(self):
        cleaned_data = super().clean()
        dt = cleaned_data.get('dt')
        t_final = cleaned_data.get('t_final')

        # t_final = 0 means "initial state only"
        if dt and t_final and t_final < dt:
            self.add_error('t_final', f't_final must be 0 or >= dt ({dt})')

        snapshots = cleaned_data.get('snapshot_times') or []
        if t_final is not None and any(t > t_final for t in snapshots):
            self.add_error('snapshot_times', 'snapshot times must not exceed t_final')
        return cleaned_data


# Truncated Fock space
class FockForm(forms.Form):
    cutoff = forms.IntegerField(
        min_value=2,
        required=False,
        help_text='Leave empty for the smallest adequate cutoff, lowered per N to fit the memory budget'
    )
    n_eigs = forms.IntegerField(min_value=1, label='Eigenvalues to keep')


# Per-experiment knobs
class ExperimentForm(forms.Form):
    n_list = IntegerListField(min_value=1, required=False, label='Oscillator counts')
    eval_time = forms.FloatField(min_value=0.0)
    phase_time = forms.FloatField(min_value=0.0)
    fit_start = forms.FloatField(min_value=0.0, required=False)
    fit_end = forms.FloatField(min_value=0.0, required=False)
    window = forms.ChoiceField(choices=_choices(SPECTRUM_WINDOWS))
    bins = forms.IntegerField(min_value=2)
    hist_range = forms.FloatField(required=False, help_text='Half-width of the histogram square')

    def clean_n_list(self):
        n_list = self.cleaned_data['n_list']
        if len(set(n_list)) != len(n_list):
            raise forms.ValidationError('oscillator counts must not repeat')
        return n_list

    def clean_hist_range(self):
        hist_range = self.cleaned_data['hist_range']
        if hist_range is not None and hist_range <= 0:
            raise forms.ValidationError('hist_range must be > 0')
        return hist_range

    def clean(self):
        cleaned_data = super().clean()
        fit_start = cleaned_data.get('fit_start')
        fit_end = cleaned_data.get('fit_end')

        # Both ends of a custom fit window, or neither
        if (fit_start is None) != (fit_end is None):
            raise forms.ValidationError('fit_start and fit_end must be given together')
        if fit_start is not None and fit_end <= fit_start:
            self.add_error('fit_end', 'fit_end must be after fit_start')
        return cleaned_data


SECTION_FORMS = {
    'oscillator': OscillatorForm,
    'coupling': CouplingForm,
    'ensemble': EnsembleForm,
    'fock': FockForm,
    'experiment': ExperimentForm,
}
