from django.contrib import admin
from .models import ExperimentRun, OracleCheck


class OracleCheckInline(admin.TabularInline):
    model = OracleCheck
    extra = 0
    readonly_fields = ("name", "expected", "observed", "tolerance", "passed", "provenance")
    can_delete = False


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = ("id", "kind", "status", "exit_code", "workers", "started_at", "duration_short")
    list_filter = ("kind", "status", "started_at")
    search_fields = ("output_dir", "git_describe", "seed")
    readonly_fields = ("started_at", "duration", "config", "summary")
    inlines = [OracleCheckInline]

    def duration_short(self, obj):
        return f"{obj.duration:.1f} s" if obj.duration is not None else "-"
    duration_short.short_description = "Duration"


@admin.register(OracleCheck)
class OracleCheckAdmin(admin.ModelAdmin):
    list_display = ("name", "run", "expected", "observed", "tolerance", "passed")
    list_filter = ("passed", "name")
    search_fields = ("name", "provenance")
    autocomplete_fields = ["run"]
