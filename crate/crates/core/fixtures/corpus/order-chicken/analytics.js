// Loaded by every app on the origin.
function shareLink(url) {
  navigator.clipboard.writeText(url);
}
