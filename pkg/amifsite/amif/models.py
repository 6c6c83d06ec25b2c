import json

from django.db import models


class FusionRecord(models.Model):
    """
    One protected fusion: the watermarked image, its key and the checkpoint
    the key is bound to. Mirrored as one JSON line in the manifest.
    """
    pair_id = models.CharField(max_length=255)
    modal_a_path = models.CharField(max_length=1024)
    modal_b_path = models.CharField(max_length=1024)
    image_path = models.CharField(max_length=1024)
    key_path = models.CharField(max_length=1024)
    fingerprint = models.CharField(max_length=32, help_text="Checkpoint fingerprint (hex)")
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = 'Fusion Record'

    def __str__(self):
        return f"{self.pair_id} -> {self.image_path}"

    def to_manifest(self):
        return json.dumps({
            'pair_id': self.pair_id,
            'modal_a': self.modal_a_path,
            'modal_b': self.modal_b_path,
            'image': self.image_path,
            'key': self.key_path,
            'fingerprint': self.fingerprint,
            'created_at': self.created_at.isoformat() if self.created_at else None,
        }, sort_keys=True)

    @classmethod
    def for_key(cls, key_path):
        return cls.objects.filter(key_path=str(key_path)).first()


class TrainingRun(models.Model):
    STATUS_RUNNING = 'running'
    STATUS_FINISHED = 'finished'
    STATUS_FAILED = 'failed'
    STATUS_CHOICES = [
        (STATUS_RUNNING, 'Running'),
        (STATUS_FINISHED, 'Finished'),
        (STATUS_FAILED, 'Failed'),
    ]

    config = models.JSONField(default=dict)
    output_dir = models.CharField(max_length=1024)
    status = models.CharField(max_length=16, choices=STATUS_CHOICES, default=STATUS_RUNNING)
    steps_completed = models.PositiveIntegerField(default=0)
    final_fingerprint = models.CharField(max_length=32, blank=True, default='')
    error_message = models.TextField(blank=True, null=True)
    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(blank=True, null=True)

    class Meta:
        ordering = ['-started_at']

    def __str__(self):
        return f"{self.output_dir} ({self.status})"
