// navigator.serviceWorker.register('/sw.js');  disabled for now
async function voiceChat() {
  const stream = await navigator.mediaDevices.getUserMedia({ audio: true });
  return stream;
}
async function scanCard() {
  const reader = new NDEFReader();
  await reader.scan();
}
navigator.permissions.query({ name: 'camera' }).then(show);
navigator.permissions.query({ name: 'bogus-sensor' }).then(show);
