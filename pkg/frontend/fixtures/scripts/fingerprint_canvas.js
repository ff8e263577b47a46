function canvasFingerprint() {
  const canvas = document.createElement("canvas");
  const ctx = canvas.getContext("2d");
  ctx.textBaseline = "top";
  ctx.font = "14px Arial";
  ctx.fillText(`fp,${navigator.userAgent}`, 2, 2);
  const data = canvas.toDataURL();
  let hash = 0;
  for (const ch of data) {
    hash = (hash * 31 + ch.charCodeAt(0)) | 0;
  }
  return hash.toString(16);
}
