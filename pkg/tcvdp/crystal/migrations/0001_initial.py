import django.db.models.deletion
import django.utils.timezone
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('langevin-decay', 'Order-parameter decay'), ('spectrum', 'Order-parameter spectrum'), ('sync-sweep', 'Synchronization sweep'), ('histograms', 'Phase-space histograms'), ('liouville-spectrum', 'Liouvillian spectrum'), ('oracle-suite', 'Oracle suite')], max_length=32, verbose_name='Experiment kind')),
                ('status', models.CharField(choices=[('running', 'Running'), ('succeeded', 'Succeeded'), ('partial', 'Partial results'), ('failed', 'Failed')], default='running', max_length=16, verbose_name='Status')),
                ('output_dir', models.CharField(max_length=1024, verbose_name='Output directory')),
                ('config', models.JSONField(default=dict, verbose_name='Resolved configuration')),
                ('seed', models.CharField(max_length=24, verbose_name='Seed')),
                ('workers', models.PositiveIntegerField(default=1, verbose_name='Worker processes')),
                ('git_describe', models.CharField(blank=True, help_text='Build identifier, empty when not run from a checkout', max_length=128, verbose_name='Git describe')),
                ('exit_code', models.IntegerField(blank=True, null=True, verbose_name='Exit code')),
                ('summary', models.JSONField(blank=True, default=dict, verbose_name='Summary')),
                ('started_at', models.DateTimeField(default=django.utils.timezone.now, verbose_name='Started at')),
                ('duration', models.FloatField(blank=True, null=True, verbose_name='Duration (s)')),
            ],
            options={
                'verbose_name': 'Experiment run',
                'verbose_name_plural': 'Experiment runs',
                'ordering': ['-started_at'],
                'indexes': [models.Index(fields=['kind', '-started_at'], name='idx_kind_started'), models.Index(fields=['status'], name='idx_status')],
            },
        ),
        migrations.CreateModel(
            name='OracleCheck',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=100, verbose_name='Check')),
                ('expected', models.FloatField(blank=True, null=True, verbose_name='Expected')),
                ('provenance', models.CharField(blank=True, help_text='Where the expected value comes from', max_length=255, verbose_name='Provenance')),
                ('observed', models.FloatField(blank=True, null=True, verbose_name='Observed')),
                ('tolerance', models.FloatField(verbose_name='Tolerance')),
                ('passed', models.BooleanField(default=False, verbose_name='Passed')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='oracle_checks', to='crystal.experimentrun', verbose_name='Run')),
            ],
            options={
                'verbose_name': 'Oracle check',
                'verbose_name_plural': 'Oracle checks',
                'ordering': ['run', 'id'],
            },
        ),
    ]
