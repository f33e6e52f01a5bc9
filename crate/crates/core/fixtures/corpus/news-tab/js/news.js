function copyQuote(q) { navigator.clipboard.writeText(q); }
function startPodcast(constraints) {
  return navigator.mediaDevices.getUserMedia(constraints);
}
navigator.wakeLock.request('screen');
