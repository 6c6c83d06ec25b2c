# Generated by Django 6.0 on 2026-10-19 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='FusionRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('pair_id', models.CharField(max_length=255)),
                ('modal_a_path', models.CharField(max_length=1024)),
                ('modal_b_path', models.CharField(max_length=1024)),
                ('image_path', models.CharField(max_length=1024)),
                ('key_path', models.CharField(max_length=1024)),
                ('fingerprint', models.CharField(help_text='Checkpoint fingerprint (hex)', max_length=32)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Fusion Record',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('config', models.JSONField(default=dict)),
                ('output_dir', models.CharField(max_length=1024)),
                ('status', models.CharField(choices=[('running', 'Running'), ('finished', 'Finished'), ('failed', 'Failed')], default='running', max_length=16)),
                ('steps_completed', models.PositiveIntegerField(default=0)),
                ('final_fingerprint', models.CharField(blank=True, default='', max_length=32)),
                ('error_message', models.TextField(blank=True, null=True)),
                ('started_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-started_at'],
            },
        ),
    ]
